//! Dense tensors, a layer-level autodiff tape and RMSProp.

mod params;
mod rmsprop;
pub mod segment;
mod tape;
mod tensor;

pub use params::{Grads, LrGroup, Param, ParamId, ParamStore};
pub use rmsprop::RmsProp;
pub use tape::{ff_forward, gru_forward, Activation, Backward, GruCell, Init, Linear, NodeId, Tape, LEAKY_SLOPE};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum NumericsError {
    #[error("{op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter `{param}`")]
    NonFinite { param: String },
    #[error("{op} produced a non-finite value")]
    NonFiniteValue { op: &'static str },
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidLearningRate(f64),
    #[error("parameter `{0}` already exists")]
    DuplicateParam(String),
    #[error("parameter `{0}` not found")]
    MissingParam(String),
    #[error("malformed tensor segment: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
