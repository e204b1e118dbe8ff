//! Dense tensors, the primitive operations, and exact reverse-mode gradients.

pub mod graph;
pub mod ops;
mod tensor;

pub use graph::{finite_diff_check, grad, GradientResult, Layer, Stack, StackGrad, Trace};
pub use ops::{kl_divergence, sigmoid, softmax, softmax_xent, KlGrad, LossGrad};
pub use tensor::Tensor;
