//! Dense tensors, a reverse-mode tape, maskable MLPs, AdamW and a plateau
//! learning-rate schedule.

pub mod graph;
pub mod mlp;
pub mod optim;
pub mod params;
pub mod tensor;

pub use graph::{Graph, Var};
pub use mlp::{Activation, MaskableMlp};
pub use optim::{AdamW, Plateau};
pub use params::ParamSet;
pub use tensor::Tensor;
