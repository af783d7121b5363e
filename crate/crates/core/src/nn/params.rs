use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Trainable tensors with their accumulated gradients.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
    #[serde(skip)]
    grads: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.grads.push(Tensor::zeros(value.rows, value.cols));
        self.values.push(value);
        self.names.push(name.into());
        self.values.len() - 1
    }

    /// PyTorch-style default init: `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> usize {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor { rows, cols, data })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn value(&self, id: usize) -> &Tensor {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> &Tensor {
        &self.grads[id]
    }

    pub fn grad_mut(&mut self, id: usize) -> &mut Tensor {
        if self.grads.len() != self.values.len() {
            self.reset_grads();
        }
        &mut self.grads[id]
    }

    pub fn zero_grad(&mut self) {
        if self.grads.len() != self.values.len() {
            self.reset_grads();
        }
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    fn reset_grads(&mut self) {
        self.grads = self.values.iter().map(|v| Tensor::zeros(v.rows, v.cols)).collect();
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn grads(&self) -> &[Tensor] {
        &self.grads
    }

    pub(crate) fn values_and_grads_mut(&mut self) -> (&mut [Tensor], &[Tensor]) {
        if self.grads.len() != self.values.len() {
            self.reset_grads();
        }
        (&mut self.values, &self.grads)
    }

    /// Whether `other` has identically named and shaped tensors.
    pub fn same_layout(&self, other: &ParamSet) -> bool {
        self.names == other.names
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.shape() == b.shape())
    }
}
