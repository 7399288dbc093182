//! Error type shared across loading, training, probing, and reporting.

use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error enum.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error on {path}: {message}")]
    CsvParse { path: PathBuf, message: String },

    #[error("json error on {path}: {message}")]
    Json { path: PathBuf, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("augmentation failed: {0}")]
    Augment(String),

    #[error("shape mismatch: {0}")]
    Shape(String),
}

impl Error {
    /// Wraps an io error with the path it occurred on.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn csv(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::CsvParse { path: path.into(), message: message.into() }
    }

    pub fn json(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Json { path: path.into(), message: message.into() }
    }
}

/// Convenience alias used by every fallible function in the crate.
pub type Result<T> = std::result::Result<T, Error>;
