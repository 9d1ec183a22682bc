//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed something that violates an operation's preconditions.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed input file; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Training produced a non-finite loss; carries the epoch where it happened.
    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    /// An internal cross-check failed (e.g. a matrix that must be circulant is not).
    #[error("internal consistency check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
