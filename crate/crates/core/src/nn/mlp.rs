use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: usize,
    pub b: usize,
    pub act: Activation,
}

/// Multilayer perceptron whose inputs can be zeroed by a runtime mask before
/// the first affine map, so masked coordinates have exactly zero influence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskableMlp {
    pub in_dim: usize,
    pub out_dim: usize,
    pub layers: Vec<Layer>,
}

impl MaskableMlp {
    /// `dims = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer uses `output`. A zero-initialised last layer is requested with
    /// `zero_last`.
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamSet,
        name: &str,
        dims: &[usize],
        hidden: Activation,
        output: Activation,
        zero_last: bool,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs input and output widths");
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, w) in dims.windows(2).enumerate() {
            let last = i + 2 == dims.len();
            let (wid, bid) = if last && zero_last {
                (
                    ps.add(format!("{name}.{i}.w"), Tensor::zeros(w[1], w[0])),
                    ps.add(format!("{name}.{i}.b"), Tensor::zeros(1, w[1])),
                )
            } else {
                (
                    ps.add_uniform(format!("{name}.{i}.w"), w[1], w[0], w[0], rng),
                    ps.add_uniform(format!("{name}.{i}.b"), 1, w[1], w[0], rng),
                )
            };
            layers.push(Layer {
                w: wid,
                b: bid,
                act: if last { output } else { hidden },
            });
        }
        Self {
            in_dim: dims[0],
            out_dim: *dims.last().unwrap(),
            layers,
        }
    }

    /// Forward pass on `input ⊙ mask`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, input: Var, mask: Option<&Tensor>) -> Result<Var> {
        let (rows, cols) = g.shape(input);
        if cols != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "MLP expects {} inputs, got {cols}",
                self.in_dim
            )));
        }
        let mut h = match mask {
            Some(m) => {
                if m.shape() != (rows, cols) {
                    return Err(Error::ShapeMismatch(format!(
                        "mask {}x{} for input {rows}x{cols}",
                        m.rows, m.cols
                    )));
                }
                g.mul_const(input, m.clone())?
            }
            None => input,
        };
        for l in &self.layers {
            let w = g.param(ps, l.w);
            let b = g.param(ps, l.b);
            h = g.linear(h, w, Some(b))?;
            h = match l.act {
                Activation::Tanh => g.tanh(h),
                Activation::Relu => g.relu(h),
                Activation::Identity => h,
            };
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (ParamSet, MaskableMlp, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ps = ParamSet::new();
        let mlp = MaskableMlp::new(&mut ps, "h", &[5, 8, 8, 3], Activation::Tanh, Activation::Identity, false, &mut rng);
        let x = Tensor::from_vec(4, 5, (0..20).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        (ps, mlp, x)
    }

    #[test]
    fn all_ones_mask_is_identity() {
        let (ps, mlp, x) = setup();
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let a = mlp.forward(&mut g, &ps, xv, None).unwrap();
        let b = mlp.forward(&mut g, &ps, xv, Some(&Tensor::full(4, 5, 1.0))).unwrap();
        assert_eq!(g.value(a), g.value(b));
    }

    #[test]
    fn masked_input_has_exactly_zero_gradient() {
        let (ps, mlp, x) = setup();
        let mut mask = Tensor::full(4, 5, 1.0);
        for r in 0..4 {
            mask.set(r, 2, 0.0);
        }
        let mut g = Graph::new();
        let xv = g.input_with_grad(x);
        let y = mlp.forward(&mut g, &ps, xv, Some(&mask)).unwrap();
        let l = g.sum_all(y);
        g.backward(l).unwrap();
        let gx = g.grad(xv).unwrap();
        for r in 0..4 {
            assert_eq!(gx.get(r, 2), 0.0);
            assert_ne!(gx.get(r, 0), 0.0);
        }
    }

    #[test]
    fn width_is_checked() {
        let (ps, mlp, _) = setup();
        let mut g = Graph::new();
        let xv = g.input(Tensor::zeros(2, 4));
        assert!(matches!(mlp.forward(&mut g, &ps, xv, None), Err(Error::ShapeMismatch(_))));
    }
}
