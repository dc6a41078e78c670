//! Error type shared by every stage of the pipeline.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file; carries the 1-based line number where parsing failed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A domain invariant or precondition was violated.
    #[error("invalid input: {0}")]
    Validation(String),

    /// Tensor/layer shape mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Numeric failure (non-finite values, degenerate statistics).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
