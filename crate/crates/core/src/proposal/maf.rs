//! Conditional masked autoregressive flow over the continuous exogenous
//! coordinates; discrete coordinates get independent categorical heads.
//!
//! Each transform maps `x` to `b` with
//! `b_j = (x_j - μ_j) · exp(-α_j)`, where `(μ_j, α_j)` depend only on the
//! coordinates preceding `j` in that transform's order and on coordinate
//! `j`'s own context slice. Orders alternate between forward and reversed.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::gmm::{one_hot, sample_categorical, LN_SQRT_2PI};
use super::{ExoCoord, Theta};
use crate::error::Result;
use crate::nn::{Activation, Graph, MaskableMlp, ParamSet, Tensor, Var};

/// Bound on `|α|`, keeping per-transform scale changes within `e^±3`.
const ALPHA_CLAMP: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MafHead {
    pub transforms: usize,
    pub context: usize,
    /// Exogenous indices of the continuous coordinates, in flow order.
    pub cont: Vec<usize>,
    /// `nets[t][p]`: conditioner at position `p` of transform `t`.
    pub nets: Vec<Vec<MaskableMlp>>,
}

impl MafHead {
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        coords: &[ExoCoord],
        transforms: usize,
        hidden: usize,
        context: usize,
        rng: &mut R,
    ) -> Self {
        let cont: Vec<usize> = (0..coords.len()).filter(|&j| coords[j].categories.is_none()).collect();
        let nets = (0..transforms)
            .map(|t| {
                (0..cont.len())
                    .map(|p| {
                        MaskableMlp::new(
                            ps,
                            &format!("maf.{t}.{p}"),
                            &[p + context, hidden, 2],
                            Activation::Tanh,
                            Activation::Identity,
                            true,
                            rng,
                        )
                    })
                    .collect()
            })
            .collect();
        Self {
            transforms,
            context,
            cont,
            nets,
        }
    }

    pub fn exo_dim(&self, coord: &ExoCoord) -> usize {
        match coord.categories {
            Some(c) => c,
            None => self.transforms * self.context,
        }
    }

    fn order(&self, t: usize) -> Vec<usize> {
        let d = self.cont.len();
        if t % 2 == 0 {
            (0..d).collect()
        } else {
            (0..d).rev().collect()
        }
    }

    /// `(μ, α)` for the coordinate at `position` of transform `t`, given the
    /// preceding coordinates and the context of that coordinate.
    fn conditioner(
        &self,
        g: &mut Graph,
        ps: &ParamSet,
        t: usize,
        position: usize,
        prev: &[Var],
        ctx_full: Var,
    ) -> Result<(Var, Var)> {
        let ctx = g.slice_cols(ctx_full, t * self.context, self.context)?;
        let mut parts = prev.to_vec();
        parts.push(ctx);
        let inp = if parts.len() == 1 { ctx } else { g.concat_cols(&parts)? };
        let out = self.nets[t][position].forward(g, ps, inp, None)?;
        let mu = g.slice_cols(out, 0, 1)?;
        let raw = g.slice_cols(out, 1, 1)?;
        let alpha = g.soft_clamp(raw, ALPHA_CLAMP);
        Ok((mu, alpha))
    }

    pub fn log_q(&self, g: &mut Graph, ps: &ParamSet, theta: &Theta, coords: &[ExoCoord], u: &[Vec<f64>]) -> Result<Var> {
        let b = u.len();
        let mut log_jac = 0.0;
        let mut xs: Vec<Var> = Vec::with_capacity(self.cont.len());
        for &j in &self.cont {
            let z: Vec<f64> = u.iter().map(|row| coords[j].standardize(row[j])).collect();
            xs.push(g.input(Tensor::from_vec(b, 1, z)?));
            log_jac -= coords[j].std.ln();
        }
        let mut terms: Vec<Var> = Vec::new();
        for t in 0..self.transforms {
            let order = self.order(t);
            let mut next = xs.clone();
            for (p, &d) in order.iter().enumerate() {
                let prev: Vec<Var> = order[..p].iter().map(|&q| xs[q]).collect();
                let (mu, alpha) = self.conditioner(g, ps, t, p, &prev, theta.per_exo[self.cont[d]])?;
                let diff = g.sub(xs[d], mu)?;
                let na = g.neg(alpha);
                let e = g.exp(na);
                next[d] = g.mul(diff, e)?;
                terms.push(na);
            }
            xs = next;
        }
        for &x in &xs {
            let sq = g.square(x);
            let h = g.scale(sq, -0.5);
            terms.push(g.add_scalar(h, -LN_SQRT_2PI));
        }
        for (j, coord) in coords.iter().enumerate() {
            if let Some(c) = coord.categories {
                let ls = g.log_softmax_cols(theta.per_exo[j]);
                let (onehot, invalid) = one_hot(u, j, c, 1);
                let picked = g.mul_const(ls, onehot)?;
                let s = g.sum_cols(picked);
                terms.push(match invalid {
                    Some(pen) => g.add_const(s, pen)?,
                    None => s,
                });
            }
        }
        let mut total = match terms.first() {
            Some(&t) => t,
            None => g.input(Tensor::zeros(b, 1)),
        };
        for &t in terms.iter().skip(1) {
            total = g.add(total, t)?;
        }
        Ok(g.add_scalar(total, log_jac))
    }

    /// Draws `n` samples; `theta` rows are aligned with samples.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        ps: &ParamSet,
        theta: &[Tensor],
        coords: &[ExoCoord],
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let d = self.cont.len();
        let mut base = vec![Tensor::zeros(n, 1); d];
        for i in 0..n {
            for col in base.iter_mut() {
                col.data[i] = StandardNormal.sample(rng);
            }
        }
        let mut g = Graph::new();
        let ctx: Vec<Var> = self.cont.iter().map(|&j| g.input(theta[j].clone())).collect();
        let mut cur: Vec<Var> = base.into_iter().map(|t| g.input(t)).collect();
        for t in (0..self.transforms).rev() {
            let order = self.order(t);
            let mut x: Vec<Option<Var>> = vec![None; d];
            for (p, &q) in order.iter().enumerate() {
                let prev: Vec<Var> = order[..p].iter().map(|&r| x[r].expect("inverted earlier")).collect();
                let (mu, alpha) = self.conditioner(&mut g, ps, t, p, &prev, ctx[q])?;
                let e = g.exp(alpha);
                let scaled = g.mul(cur[q], e)?;
                x[q] = Some(g.add(scaled, mu)?);
            }
            cur = x.into_iter().map(|v| v.expect("all coordinates inverted")).collect();
        }
        let mut out = vec![vec![0.0; coords.len()]; n];
        for (q, &j) in self.cont.iter().enumerate() {
            let col = g.value(cur[q]);
            for (i, row) in out.iter_mut().enumerate() {
                row[j] = coords[j].unstandardize(col.data[i]);
            }
        }
        for (j, coord) in coords.iter().enumerate() {
            if let Some(_c) = coord.categories {
                for (i, row) in out.iter_mut().enumerate() {
                    row[j] = sample_categorical(theta[j].row(i), rng) as f64;
                }
            }
        }
        Ok(out)
    }

    /// Applies the flow `T` to standardized continuous coordinates
    /// (rows of `z`) and returns the base-space values.
    pub fn forward_values(&self, ps: &ParamSet, theta: &[Tensor], z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = z.len();
        let mut g = Graph::new();
        let ctx: Vec<Var> = self.cont.iter().map(|&j| g.input(theta[j].clone())).collect();
        let mut xs: Vec<Var> = (0..self.cont.len())
            .map(|q| g.input(Tensor::from_vec(n, 1, z.iter().map(|r| r[q]).collect()).expect("column")))
            .collect();
        for t in 0..self.transforms {
            let order = self.order(t);
            let mut next = xs.clone();
            for (p, &q) in order.iter().enumerate() {
                let prev: Vec<Var> = order[..p].iter().map(|&r| xs[r]).collect();
                let (mu, alpha) = self.conditioner(&mut g, ps, t, p, &prev, ctx[q])?;
                let diff = g.sub(xs[q], mu)?;
                let na = g.neg(alpha);
                let e = g.exp(na);
                next[q] = g.mul(diff, e)?;
            }
            xs = next;
        }
        Ok((0..n)
            .map(|i| xs.iter().map(|&v| g.value(v).data[i]).collect())
            .collect())
    }

    /// Inverse of [`MafHead::forward_values`].
    pub fn inverse_values(&self, ps: &ParamSet, theta: &[Tensor], b: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = b.len();
        let d = self.cont.len();
        let mut g = Graph::new();
        let ctx: Vec<Var> = self.cont.iter().map(|&j| g.input(theta[j].clone())).collect();
        let mut cur: Vec<Var> = (0..d)
            .map(|q| g.input(Tensor::from_vec(n, 1, b.iter().map(|r| r[q]).collect()).expect("column")))
            .collect();
        for t in (0..self.transforms).rev() {
            let order = self.order(t);
            let mut x: Vec<Option<Var>> = vec![None; d];
            for (p, &q) in order.iter().enumerate() {
                let prev: Vec<Var> = order[..p].iter().map(|&r| x[r].expect("inverted earlier")).collect();
                let (mu, alpha) = self.conditioner(&mut g, ps, t, p, &prev, ctx[q])?;
                let e = g.exp(alpha);
                let scaled = g.mul(cur[q], e)?;
                x[q] = Some(g.add(scaled, mu)?);
            }
            cur = x.into_iter().map(|v| v.expect("all coordinates inverted")).collect();
        }
        Ok((0..n)
            .map(|i| cur.iter().map(|&v| g.value(v).data[i]).collect())
            .collect())
    }
}
