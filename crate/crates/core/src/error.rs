//! Shared error type for the pipeline library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Malformed binary or structured file contents.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid configuration (bad ranges, unknown keys, inconsistent groups).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid runtime input (shape mismatches, out-of-bounds indices).
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown class label '{0}'")]
    UnknownClass(String),
}

impl Error {
    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
