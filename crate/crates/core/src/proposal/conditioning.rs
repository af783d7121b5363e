//! Conditioning vectors `c = π ⊕ ω(Y) ⊕ ω(X)` and Markov-boundary masks.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{CtfGroup, CtfVariableSet};
use crate::graphs::{augmented_graph, markov_boundary_in, AugmentedGraph, CutStrategy};
use crate::scm::Scm;

/// Per-variable affine standardization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Statistics of the observational endogenous distribution from
    /// `n` forward samples.
    pub fn from_scm(scm: &Scm, n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = scm.n_endo();
        let mut sum = vec![0.0; d];
        let mut sq = vec![0.0; d];
        for u in scm.sample_exogenous(n, &mut rng) {
            for (i, v) in scm.forward(&u).into_iter().enumerate() {
                sum[i] += v;
                sq[i] += v * v;
            }
        }
        let nf = n as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / nf).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| (q / nf - m * m).max(0.0).sqrt().max(1e-6))
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, i: usize, x: f64) -> f64 {
        (x - self.mean[i]) / self.std[i]
    }
}

/// Encoding of one group over `n_endo` variables: standardized
/// values of observed and intervened variables (zero elsewhere), then the
/// observe indicators, then the intervene indicators.
pub fn encode_group(n_endo: usize, group: &CtfGroup, y: &[f64], std: Option<&Standardizer>) -> Result<Vec<f64>> {
    if y.len() != group.observed.len() {
        return Err(Error::GroupWidthMismatch(format!(
            "{} values for {} observed variables",
            y.len(),
            group.observed.len()
        )));
    }
    let mut c = vec![0.0; 3 * n_endo];
    let scale = |i: usize, x: f64| std.map_or(x, |s| s.apply(i, x));
    for (&v, &val) in group.observed.iter().zip(y) {
        if v >= n_endo {
            return Err(Error::UnknownVariable(format!("endogenous #{v}")));
        }
        c[v] = scale(v, val);
        c[n_endo + v] = 1.0;
    }
    for &(v, x) in group.intervention.pairs() {
        if v >= n_endo {
            return Err(Error::UnknownVariable(format!("endogenous #{v}")));
        }
        c[v] = scale(v, x);
        c[2 * n_endo + v] = 1.0;
    }
    Ok(c)
}

/// One conditioning vector per group of `vars`, with `y` the flattened
/// observed values.
pub fn encode_event(
    n_endo: usize,
    vars: &CtfVariableSet,
    y: &[f64],
    std: Option<&Standardizer>,
) -> Result<Vec<Vec<f64>>> {
    if y.len() != vars.dim() {
        return Err(Error::GroupWidthMismatch(format!(
            "{} values for {} counterfactual variables",
            y.len(),
            vars.dim()
        )));
    }
    let mut out = Vec::with_capacity(vars.k());
    let mut off = 0;
    for g in &vars.groups {
        let w = g.observed.len();
        out.push(encode_group(n_endo, g, &y[off..off + w], std)?);
        off += w;
    }
    Ok(out)
}

type MaskKey = (Vec<usize>, Vec<usize>);

/// Computes and caches the input masks `m_ij` of every exogenous variable
/// for a group shape `(Y_i, X_i)`. A value slot is kept when its variable is
/// in the boundary or intervened; indicator slots are always kept.
#[derive(Debug)]
pub struct MaskProvider {
    graph: AugmentedGraph,
    strategy: CutStrategy,
    n_endo: usize,
    n_exo: usize,
    cache: Mutex<HashMap<MaskKey, Arc<Vec<Vec<f64>>>>>,
}

impl MaskProvider {
    pub fn new(scm: &Scm, strategy: CutStrategy) -> Self {
        Self {
            graph: augmented_graph(scm),
            strategy,
            n_endo: scm.n_endo(),
            n_exo: scm.n_exo(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Copy sharing the current cache contents.
    pub fn fresh(&self) -> Self {
        Self {
            graph: self.graph.clone(),
            strategy: self.strategy,
            n_endo: self.n_endo,
            n_exo: self.n_exo,
            cache: Mutex::new(self.cache.lock().expect("mask cache poisoned").clone()),
        }
    }

    pub fn strategy(&self) -> CutStrategy {
        self.strategy
    }

    pub fn group_masks(&self, group: &CtfGroup) -> Result<Arc<Vec<Vec<f64>>>> {
        let iv: Vec<usize> = group.intervention.variables().collect();
        let key = (group.observed.clone(), iv);
        if let Some(m) = self.cache.lock().expect("mask cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let g = self.graph.mutilate(&key.1, self.strategy)?;
        let n = self.n_endo;
        let masks: Vec<Vec<f64>> = (0..self.n_exo)
            .map(|j| {
                let b = markov_boundary_in(&g, self.graph.exo_node(j), &key.0, &key.1);
                let mut m = vec![1.0; 3 * n];
                for (v, slot) in m.iter_mut().enumerate().take(n) {
                    if !b.contains(&v) && !key.1.contains(&v) {
                        *slot = 0.0;
                    }
                }
                m
            })
            .collect();
        let masks = Arc::new(masks);
        self.cache
            .lock()
            .expect("mask cache poisoned")
            .insert(key, masks.clone());
        Ok(masks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{zoo, Intervention};

    #[test]
    fn observed_only_group() {
        let g = CtfGroup::new(vec![1], Intervention::empty());
        let c = encode_group(3, &g, &[1.5], None).unwrap();
        assert_eq!(c, vec![0.0, 1.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn intervened_and_observed_group() {
        let g = CtfGroup::new(vec![2], Intervention::new([(0, 2.0)]));
        let c = encode_group(3, &g, &[-0.7], None).unwrap();
        assert_eq!(c, vec![2.0, 0.0, -0.7, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            encode_group(3, &g, &[1.0, 2.0], None),
            Err(Error::GroupWidthMismatch(_))
        ));
    }

    #[test]
    fn fully_observed_sets_all_indicators() {
        let g = CtfGroup::new(vec![0, 1, 2], Intervention::empty());
        let c = encode_group(3, &g, &[1.0, 2.0, 3.0], None).unwrap();
        assert_eq!(&c[3..6], &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn chain_masks() {
        let scm = zoo::load("CHAIN-LIN-3").unwrap();
        let p = MaskProvider::new(&scm, CutStrategy::EndoCut);
        let masks = p
            .group_masks(&CtfGroup::new(vec![0, 1], Intervention::empty()))
            .unwrap();
        // U2's boundary is {V1, V2}; U3 sees nothing observed
        assert_eq!(&masks[1][..3], &[1.0, 1.0, 0.0]);
        assert_eq!(&masks[2][..3], &[0.0, 0.0, 0.0]);
        assert!(masks.iter().all(|m| m[3..].iter().all(|&x| x == 1.0)));
    }
}
