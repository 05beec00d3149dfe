//! Dense reverse-mode differentiation over `f64` matrices.

mod adam;
mod graph;
mod mlp;
mod params;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{softmax_rows, Gradients, Graph, OpKind, Var};
pub use mlp::{gradient_norm_of_critic, input_gradient_norm, Activation, Mlp};
pub use params::{ParameterSet, CHECKPOINT_FORMAT_VERSION, CHECKPOINT_MAGIC};
pub use tensor::Tensor;
