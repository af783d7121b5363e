//! Conditional Gaussian-mixture head. Component weights come from the
//! shared (unmasked) branch; each exogenous coordinate's component means and
//! scales (or categorical logits) come from that coordinate's own branch.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{ExoCoord, Theta};
use crate::error::Result;
use crate::nn::{Graph, Tensor, Var};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub(crate) const SCALE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmHead {
    pub components: usize,
    /// Whether scales live in the per-coordinate (maskable) slices; when
    /// false they are produced by the shared branch.
    pub mask_scales: bool,
}

impl GmmHead {
    pub fn exo_dim(&self, coord: &ExoCoord) -> usize {
        match coord.categories {
            Some(c) => self.components * c,
            None if self.mask_scales => 2 * self.components,
            None => self.components,
        }
    }

    pub fn shared_dim(&self, coords: &[ExoCoord]) -> usize {
        let n_cont = coords.iter().filter(|c| c.categories.is_none()).count();
        self.components * (1 + if self.mask_scales { 0 } else { n_cont })
    }

    fn raw_scale(&self, g: &mut Graph, theta: &Theta, j: usize, cont_index: usize) -> Result<Var> {
        let k = self.components;
        if self.mask_scales {
            g.slice_cols(theta.per_exo[j], k, k)
        } else {
            g.slice_cols(theta.shared.expect("gmm has a shared branch"), k * (1 + cont_index), k)
        }
    }

    /// `log q(u | θ)` for each row, on the original (unstandardized) scale.
    pub fn log_q(&self, g: &mut Graph, theta: &Theta, coords: &[ExoCoord], u: &[Vec<f64>]) -> Result<Var> {
        let k = self.components;
        let b = u.len();
        let shared = theta.shared.expect("gmm has a shared branch");
        let logits = g.slice_cols(shared, 0, k)?;
        let mut total = g.log_softmax_cols(logits);
        let mut log_jac = 0.0;
        let mut cont_index = 0;
        for (j, coord) in coords.iter().enumerate() {
            let comp = match coord.categories {
                None => {
                    let z: Vec<f64> = u
                        .iter()
                        .flat_map(|row| std::iter::repeat_n(coord.standardize(row[j]), k))
                        .collect();
                    let zv = g.input(Tensor::from_vec(b, k, z)?);
                    let mu = g.slice_cols(theta.per_exo[j], 0, k)?;
                    let raw = self.raw_scale(g, theta, j, cont_index)?;
                    let sp = g.softplus(raw);
                    let sigma = g.add_scalar(sp, SCALE_FLOOR);
                    let diff = g.sub(zv, mu)?;
                    let d = g.div(diff, sigma)?;
                    let sq = g.square(d);
                    let half = g.scale(sq, -0.5);
                    let ls = g.log(sigma);
                    let s = g.sub(half, ls)?;
                    log_jac -= coord.std.ln();
                    cont_index += 1;
                    g.add_scalar(s, -LN_SQRT_2PI)
                }
                Some(c) => {
                    let logits = g.reshape(theta.per_exo[j], b * k, c)?;
                    let ls = g.log_softmax_cols(logits);
                    let (onehot, invalid) = one_hot(u, j, c, k);
                    let picked = g.mul_const(ls, onehot)?;
                    let s = g.sum_cols(picked);
                    let s = g.reshape(s, b, k)?;
                    match invalid {
                        Some(pen) => g.add_const(s, pen)?,
                        None => s,
                    }
                }
            };
            total = g.add(total, comp)?;
        }
        let lse = g.logsumexp_cols(total);
        Ok(g.add_scalar(lse, log_jac))
    }

    /// Draws one `u` per row of `theta` values.
    pub fn sample<R: Rng + ?Sized>(&self, theta: &[Tensor], shared: &Tensor, coords: &[ExoCoord], row: usize, rng: &mut R) -> Vec<f64> {
        let k = self.components;
        let comp = sample_categorical(&shared.row(row)[..k], rng);
        let mut cont_index = 0;
        coords
            .iter()
            .enumerate()
            .map(|(j, coord)| match coord.categories {
                None => {
                    let t = theta[j].row(row);
                    let raw = if self.mask_scales {
                        t[k + comp]
                    } else {
                        shared.row(row)[k * (1 + cont_index) + comp]
                    };
                    cont_index += 1;
                    let sigma = crate::scm::expr::softplus(raw) + SCALE_FLOOR;
                    let e: f64 = StandardNormal.sample(rng);
                    coord.unstandardize(t[comp] + sigma * e)
                }
                Some(c) => sample_categorical(&theta[j].row(row)[comp * c..(comp + 1) * c], rng) as f64,
            })
            .collect()
    }
}

/// One-hot rows of coordinate `j`, repeated `reps` times per sample, plus a
/// `-inf` penalty for values that are not valid categories.
pub(crate) fn one_hot(u: &[Vec<f64>], j: usize, c: usize, reps: usize) -> (Tensor, Option<Tensor>) {
    let mut t = Tensor::zeros(u.len() * reps, c);
    let mut pen = Tensor::zeros(u.len(), reps);
    let mut any_invalid = false;
    for (i, row) in u.iter().enumerate() {
        let x = row[j];
        let valid = x >= 0.0 && x.fract() == 0.0 && (x as usize) < c;
        for r in 0..reps {
            if valid {
                t.set(i * reps + r, x as usize, 1.0);
            } else {
                pen.set(i, r, f64::NEG_INFINITY);
                any_invalid = true;
            }
        }
    }
    (t, any_invalid.then_some(pen))
}

/// Index drawn with probabilities `softmax(logits)`.
pub(crate) fn sample_categorical<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> usize {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut r = rng.random::<f64>() * z;
    for (i, wi) in w.iter().enumerate() {
        if r < *wi {
            return i;
        }
        r -= wi;
    }
    w.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}
