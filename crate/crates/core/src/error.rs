use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON at byte {offset}: {message}")]
    JsonAt { offset: usize, message: String },

    #[error("line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("unknown dimension `{0}`")]
    UnknownDimension(String),

    #[error("unknown label code {0} (expected 0-8)")]
    UnknownLabelCode(i64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("classifier backend error: {0}")]
    Backend(String),

    #[error("element {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),

    #[error("retryable endpoint failure: {0}")]
    Retryable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("{0}")]
    Other(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the network or a remote endpoint.
    pub fn is_network(&self) -> bool {
        match self {
            Error::Auth(_) | Error::Retryable(_) | Error::Protocol(_) => true,
            Error::AtIndex { source, .. } => source.is_network(),
            _ => false,
        }
    }
}
