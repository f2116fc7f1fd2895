use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the engine, grouped by the subsystem that detects them.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("invalid architecture at layer `{layer}`: {reason}")]
    Spec { layer: String, reason: String },

    #[error("training diverged: {0}")]
    Training(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("cannot read `{path}`: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("unsupported format in `{path}`: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("split error: {0}")]
    Split(String),

    #[error("cannot write `{path}`: {reason}")]
    Output { path: PathBuf, reason: String },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn output(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Output { path: path.into(), reason: err.to_string() }
    }

    pub(crate) fn ingestion(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Ingestion { path: path.into(), reason: err.to_string() }
    }
}
