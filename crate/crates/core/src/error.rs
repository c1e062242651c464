use alloc::string::String;

/// Errors raised by the forest, smoothing, neural, and training routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite input value at index {index}")]
    NonFinite { index: usize },

    #[error("malformed tree at node {node}: {reason}")]
    MalformedTree { node: usize, reason: String },

    #[error("empty interval [{lower}, {upper})")]
    EmptyInterval { lower: f64, upper: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error("label {label} is out of range for {loss}")]
    LabelOutOfRange { label: f64, loss: &'static str },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_input(x: &[f64], dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: x.len() });
    }
    match x.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}
