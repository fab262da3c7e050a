use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("zero vector cannot be normalized{}", .0.as_ref().map(|k| format!(" (key {k:?})")).unwrap_or_default())]
    ZeroVector(Option<String>),

    #[error("no embedding for {0:?}")]
    MissingEmbedding(String),

    #[error("duplicate key {0:?}")]
    DuplicateKey(String),

    #[error("training diverged: {0}")]
    NonFinite(String),

    #[error("failed to score candidate {rank} ({text:?}): {source}")]
    Scoring {
        rank: usize,
        text: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures of the filesystem rather than of the data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
