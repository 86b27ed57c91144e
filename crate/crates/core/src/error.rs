use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: validation failed: {message}")]
    Validation {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("rating {0} is outside 1..=5")]
    Rating(i64),

    #[error("unknown category {0:?}")]
    UnknownCategory(String),

    #[error("token id {id} out of range for vocabulary of size {size}")]
    TokenId { id: usize, size: usize },

    #[error("{0}")]
    Empty(&'static str),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable short label used as the CLI error prefix.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Config(_) => "config",
            Error::Usage(_) => "usage",
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Rating(_) => "rating",
            Error::UnknownCategory(_) => "category",
            Error::TokenId { .. } => "vocab",
            Error::Empty(_) => "empty",
            Error::NonFinite(_) => "numeric",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
