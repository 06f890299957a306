//! A minimal, manually-differentiated network stack: conv2d, batch-norm,
//! ReLU, dense and softmax cross-entropy, enough to build small image
//! classifiers while exposing per-layer gradients and per-component
//! activations.

pub mod io;
pub mod layers;
pub mod loss;
mod model;
mod tensor;

pub use layers::ConvCfg;
pub use loss::{softmax_cross_entropy, LossOutput};
pub use model::{Forward, LayerActivation, LayerSpec, Mode, Model, ModelSpec};
pub use tensor::{ComponentLayout, ParamTensor, ReshapeRule, Tensor};

use std::fmt;

#[derive(Debug)]
pub enum NnError {
    InvalidSpec(String),
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },
    BadDump(String),
    Io(std::io::Error),
}

impl fmt::Display for NnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NnError::InvalidSpec(msg) => write!(f, "invalid model spec: {msg}"),
            NnError::ShapeMismatch { expected, got } => write!(
                f,
                "input shape {got:?} does not match expected {expected:?} (batch axis free)"
            ),
            NnError::BadDump(msg) => write!(f, "bad parameter dump: {msg}"),
            NnError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for NnError {}

impl From<std::io::Error> for NnError {
    fn from(e: std::io::Error) -> Self {
        NnError::Io(e)
    }
}
