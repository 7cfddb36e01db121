//! Dense tensors and reverse-mode differentiation.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_report, GradCheckReport, DEFAULT_EPSILON};
pub use graph::{softmax_in_place, Gradients, Graph, Var, MASK_SENTINEL};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
