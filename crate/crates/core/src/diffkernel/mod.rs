//! Dense tensors, a reverse-mode tape over the primitives the model needs,
//! a finite-difference gradient checker and the Adam optimizer.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub mod suite;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_with_fault, relative_error, GradCheckReport};
pub use tape::{shrink_weights, sigmoid, softmax_in_place, Gradients, Primitive, Tape, Var, COSINE_EPS};
pub use tensor::{Real, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not hold {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: mask selects no rows")]
    EmptyMask { op: &'static str },
    #[error("expected a scalar output, got shape {shape:?}")]
    NonScalar { shape: Vec<usize> },
    #[error("learning rate must be positive, got {0}")]
    InvalidLearningRate(f64),
    #[error("shrink threshold must lie in [0, 1), got {0}")]
    InvalidShrinkThreshold(f64),
    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),
}
