use std::path::PathBuf;

use thiserror::Error;

use crate::reconstruct::ReconState;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("wrong sinogram kind: expected {expected}, found {found}")]
    WrongKind { expected: String, found: String },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("iteration diverged after {} iterates", state.history.len())]
    Diverged { state: Box<ReconState> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
