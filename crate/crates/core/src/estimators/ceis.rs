//! Cross-entropy importance sampling: a per-event, unconditional mixture
//! proposal refined by weighted EM on the samples that hit the event.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{EstimateReport, Guard, DEFAULT_FAILURE_THRESHOLD};
use crate::error::{Error, Result};
use crate::events::CtfEvent;
use crate::proposal::ExoCoord;
use crate::scm::Scm;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const STD_FLOOR: f64 = 1e-3;
const PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeisConfig {
    pub iterations: usize,
    pub n_per_iter: usize,
    pub n_final: usize,
    pub components: usize,
    /// Weight of the new fit in each smoothed update.
    pub smoothing: f64,
    /// Scale factor applied when an iteration has no hits.
    pub widen: f64,
    pub guard: Guard,
}

impl Default for CeisConfig {
    fn default() -> Self {
        Self {
            iterations: 4,
            n_per_iter: 1000,
            n_final: 1000,
            components: 10,
            smoothing: 0.7,
            widen: 2.0,
            guard: Guard::default(),
        }
    }
}

impl CeisConfig {
    /// Splits a total budget of `n` samples evenly over the fitting
    /// iterations and the final estimate.
    pub fn with_budget(n: usize, iterations: usize) -> Self {
        let per = (n / (iterations + 1)).max(1);
        Self {
            iterations,
            n_per_iter: per,
            n_final: n.saturating_sub(per * iterations).max(1),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Gauss { mean: f64, std: f64 },
    Cat { probs: Vec<f64> },
}

/// Mixture of product densities over standardized exogenous coordinates.
#[derive(Debug, Clone)]
struct Mixture {
    weights: Vec<f64>,
    comps: Vec<Vec<Factor>>,
}

impl Mixture {
    fn prior_like<R: Rng + ?Sized>(scm: &Scm, coords: &[ExoCoord], k: usize, rng: &mut R) -> Self {
        let comps = (0..k)
            .map(|_| {
                coords
                    .iter()
                    .zip(&scm.exo_dist().marginals)
                    .map(|(c, m)| match c.categories {
                        Some(n) => Factor::Cat {
                            probs: (0..n).map(|v| m.log_density(v as f64).exp().max(PROB_FLOOR)).collect(),
                        },
                        None => Factor::Gauss {
                            mean: 0.1 * rng.sample::<f64, _>(StandardNormal),
                            std: 1.0,
                        },
                    })
                    .collect()
            })
            .collect();
        Self {
            weights: vec![1.0 / k as f64; k],
            comps,
        }
    }

    fn component_log_density(&self, k: usize, coords: &[ExoCoord], u: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((f, c), &x) in self.comps[k].iter().zip(coords).zip(u) {
            s += match f {
                Factor::Gauss { mean, std } => {
                    let z = (c.standardize(x) - mean) / std;
                    -0.5 * z * z - LN_SQRT_2PI - std.ln() - c.std.ln()
                }
                Factor::Cat { probs } => {
                    let valid = x >= 0.0 && x.fract() == 0.0 && (x as usize) < probs.len();
                    if valid {
                        let z: f64 = probs.iter().sum();
                        (probs[x as usize] / z).ln()
                    } else {
                        f64::NEG_INFINITY
                    }
                }
            };
        }
        s
    }

    fn log_density(&self, coords: &[ExoCoord], u: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.weights.len())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, coords, u))
            .collect();
        logsumexp(&terms)
    }

    fn sample<R: Rng + ?Sized>(&self, coords: &[ExoCoord], rng: &mut R) -> Vec<f64> {
        let k = pick(&self.weights, rng);
        self.comps[k]
            .iter()
            .zip(coords)
            .map(|(f, c)| match f {
                Factor::Gauss { mean, std } => c.unstandardize(mean + std * rng.sample::<f64, _>(StandardNormal)),
                Factor::Cat { probs } => pick(probs, rng) as f64,
            })
            .collect()
    }

    fn widen(&mut self, factor: f64) {
        for comp in &mut self.comps {
            for f in comp {
                if let Factor::Gauss { std, .. } = f {
                    *std *= factor;
                }
            }
        }
    }

    /// One smoothed weighted-EM step on `(u, log w)` pairs with finite weight.
    fn refit(&mut self, coords: &[ExoCoord], us: &[Vec<f64>], lw: &[f64], alpha: f64) {
        let mx = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = lw.iter().map(|l| (l - mx).exp()).collect();
        let kk = self.weights.len();
        let mut resp = vec![vec![0.0; kk]; us.len()];
        for (i, u) in us.iter().enumerate() {
            if w[i] == 0.0 {
                continue;
            }
            let t: Vec<f64> = (0..kk)
                .map(|k| self.weights[k].ln() + self.component_log_density(k, coords, u))
                .collect();
            let z = logsumexp(&t);
            for k in 0..kk {
                resp[i][k] = w[i] * (t[k] - z).exp();
            }
        }
        let total: f64 = resp.iter().flatten().sum();
        if !(total > 0.0) {
            return;
        }
        for k in 0..kk {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            self.weights[k] = alpha * (nk / total) + (1.0 - alpha) * self.weights[k];
            if nk <= 0.0 {
                continue;
            }
            for (j, f) in self.comps[k].iter_mut().enumerate() {
                match f {
                    Factor::Gauss { mean, std } => {
                        let m = us.iter().zip(&resp).map(|(u, r)| r[k] * coords[j].standardize(u[j])).sum::<f64>() / nk;
                        let v = us
                            .iter()
                            .zip(&resp)
                            .map(|(u, r)| r[k] * (coords[j].standardize(u[j]) - m).powi(2))
                            .sum::<f64>()
                            / nk;
                        *mean = alpha * m + (1.0 - alpha) * *mean;
                        *std = (alpha * v.sqrt() + (1.0 - alpha) * *std).max(STD_FLOOR);
                    }
                    Factor::Cat { probs } => {
                        let mut counts = vec![0.0; probs.len()];
                        for (u, r) in us.iter().zip(&resp) {
                            let x = u[j];
                            if x >= 0.0 && (x as usize) < counts.len() {
                                counts[x as usize] += r[k];
                            }
                        }
                        let z: f64 = probs.iter().sum();
                        for (p, c) in probs.iter_mut().zip(counts) {
                            *p = (alpha * c / nk + (1.0 - alpha) * *p / z).max(PROB_FLOOR);
                        }
                    }
                }
            }
        }
        let z: f64 = self.weights.iter().sum();
        self.weights.iter_mut().for_each(|w| *w = (*w / z).max(PROB_FLOOR));
    }
}

fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn pick<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let z: f64 = w.iter().sum();
    let mut r = rng.random::<f64>() * z;
    for (i, x) in w.iter().enumerate() {
        if r < *x {
            return i;
        }
        r -= x;
    }
    w.len() - 1
}

fn guarded_round<R: Rng + ?Sized>(
    mix: &Mixture,
    scm: &Scm,
    coords: &[ExoCoord],
    event: &CtfEvent,
    n: usize,
    guard: Guard,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut scratch = vec![0.0; scm.n_endo()];
    let cap = guard.max_log_weight();
    let mut us = Vec::with_capacity(n);
    let mut lw = Vec::with_capacity(n);
    for _ in 0..n {
        let u = if guard.eps >= 1.0 || rng.random::<f64>() < guard.eps {
            scm.exo_dist().sample_one(rng)
        } else {
            mix.sample(coords, rng)
        };
        let lp = scm.log_density_exogenous(&u);
        let w = if lp == f64::NEG_INFINITY || !event.membership_with(scm, &u, &mut scratch) {
            f64::NEG_INFINITY
        } else {
            (lp - guard.log_mixture(mix.log_density(coords, &u), lp)).min(cap)
        };
        us.push(u);
        lw.push(w);
    }
    (us, lw)
}

/// Fits a proposal to `event` alone, then estimates its probability.
pub fn estimate_ceis<R: Rng + ?Sized>(scm: &Scm, event: &CtfEvent, config: &CeisConfig, rng: &mut R) -> Result<EstimateReport> {
    if config.n_final == 0 || config.components == 0 {
        return Err(Error::Config("CEIS needs samples and components".into()));
    }
    let coords: Vec<ExoCoord> = scm.exo_dist().marginals.iter().map(ExoCoord::from_marginal).collect();
    let mut mix = Mixture::prior_like(scm, &coords, config.components, rng);
    for _ in 0..config.iterations {
        let (us, lw) = guarded_round(&mix, scm, &coords, event, config.n_per_iter, config.guard, rng);
        if lw.iter().all(|w| *w == f64::NEG_INFINITY) {
            mix.widen(config.widen);
        } else {
            mix.refit(&coords, &us, &lw, config.smoothing);
        }
    }
    let (_, lw) = guarded_round(&mix, scm, &coords, event, config.n_final, config.guard, rng);
    Ok(EstimateReport::from_log_weights("ceis", lw, DEFAULT_FAILURE_THRESHOLD))
}
