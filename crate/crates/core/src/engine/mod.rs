//! Minimal deterministic numerical engine: tensors, sequential models built
//! from a fixed layer set, temperature softmax, cross-entropy and Adam.

mod adam;
pub mod arch;
mod layer;
pub mod loss;
mod model;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use layer::LayerSpec;
pub use loss::{cross_entropy, softmax_with_temperature};
pub use model::{Architecture, ForwardTrace, SequentialModel};
pub use tensor::{argmax, Tensor};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("tensor shape {shape:?} does not hold {len} elements")]
    BadTensor { shape: Vec<usize>, len: usize },
    #[error("rows have different lengths")]
    RaggedRows,
    #[error("layer {layer} ({name}): expected {expected}, found shape {found:?}")]
    Dimension {
        layer: usize,
        name: String,
        expected: String,
        found: Vec<usize>,
    },
    #[error("model must end in a flat logit vector, ends in {0:?}")]
    NotLogits(Vec<usize>),
    #[error("model has no layers")]
    EmptyModel,
    #[error("parameter tensors do not match layer {layer}")]
    ParamShape { layer: String },
    #[error("expected {expected} parameter tensors, found {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("backward called without a preceding forward pass")]
    BackwardWithoutForward,
    #[error("gradient shapes do not match parameters")]
    GradientShape,
    #[error("distribution shapes differ: {left:?} vs {right:?}")]
    LengthMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown architecture {0:?}")]
    UnknownArchitecture(String),
}
