use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A model or run configuration is inconsistent (shapes, ranges, counts).
    #[error("configuration error: {0}")]
    Config(String),

    /// An operation was called outside its preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input data violates a numeric contract (negative moments, non-finite values).
    #[error("data error: {0}")]
    Data(String),

    /// Optimization produced a non-finite gradient or loss.
    #[error("training error at {stage} {index}: {reason}")]
    Training {
        stage: &'static str,
        index: usize,
        reason: String,
    },

    /// The HMC sampler gave up.
    #[error("sampler error: {0}")]
    Sampler(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
