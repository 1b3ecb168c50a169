//! Minimal dense-tensor engine: a recording tape with reverse-mode
//! differentiation, the MSE/MAE losses, Adam, a central-difference gradient
//! checker, and a binary checkpoint format.
//!
//! All arithmetic is `f64` and single-threaded; a given graph always produces
//! bit-identical values and gradients.

mod adam;
pub mod checkpoint;
mod gradcheck;
mod kernels;
pub mod loss;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, grad_check_sampled, GradCheckReport};
pub use tape::{Gradients, Padding, Tape, Var};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),
}
