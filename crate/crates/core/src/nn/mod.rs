//! Dense feed-forward ReLU networks trained by exact backprop.

mod checkpoint;
mod layer_norm;
mod loss;
mod net;
mod optim;

pub use checkpoint::{
    gradients_from_sections, gradients_to_sections, net_from_sections, net_to_sections,
    read_sections, write_sections, Section,
};
pub use layer_norm::{layer_norm_backward, layer_norm_forward, LN_EPS};
pub use loss::{cross_entropy, CrossEntropy};
pub use net::{DenseNet, ForwardTrace, Gradients, InitRule, Layer};
pub use optim::{OptimizerKind, OptimizerState};
