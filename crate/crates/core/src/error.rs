use std::io;

/// Errors raised anywhere in the workbench.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// Two sequences that must agree in length do not.
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    /// Tensor shapes are incompatible with a layer or loss.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A NaN or infinity appeared where finite values are required.
    #[error("non-finite value in {0}")]
    NonFinite(String),
    /// Malformed, truncated or incompatible checkpoint/dataset file.
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    /// Experiment configuration error, with the 1-based line number.
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    /// The recommender has no registry entry for a classified condition.
    #[error("routing: {0}")]
    Routing(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
