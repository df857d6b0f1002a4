//! A small feed-forward network engine: swish MLPs over a flat parameter
//! vector, batched reverse-mode gradients, and SGD/Adam.

mod mlp;
mod optim;

pub use mlp::{mlp_param_count, sigmoid, swish, LayerLayout, Mlp, MlpSpec, Workspace};
pub use optim::{Algorithm, OptimizerConfig, OptimizerState};
