use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("document {id:?}: {message}")]
    InvalidDocument { id: String, message: String },

    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    #[error("unknown task preset {name:?}; available presets: {available}")]
    UnknownTask { name: String, available: String },

    #[error("{0}")]
    Sampling(String),

    #[error("overlapping mentions at token ranges {first:?} and {second:?}")]
    OverlappingMentions {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("key concept set {0:?} has no mask token")]
    MissingMaskToken(String),

    #[error("no context vector for doc {doc_id:?}, kcs {kcs:?}, occurrence {occurrence}")]
    MissingVector {
        doc_id: String,
        kcs: String,
        occurrence: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in context vector")]
    NonFinite,

    #[error("training data for {context} contains a single class")]
    SingleClass { context: String },

    #[error("{0}")]
    EmptyInput(String),

    #[error("prediction/gold id sets differ: {0}")]
    IdMismatch(String),

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
