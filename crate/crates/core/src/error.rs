use std::path::PathBuf;

use ademiner_nn::NnError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Stream(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("span {span:?} is not aligned to token boundaries in {doc_id}")]
    Alignment {
        doc_id: String,
        span: (usize, usize, String),
    },
    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    Dimension {
        expected: usize,
        actual: usize,
        context: String,
    },
    #[error("invalid span: {0}")]
    Span(String),
    #[error("overlapping spans cannot be encoded: {0}")]
    Overlap(String),
    #[error("consistency: {0}")]
    Consistency(String),
    #[error("dependency structure: {0}")]
    Dependency(String),
    #[error("training: {0}")]
    Training(String),
    #[error("evaluation: {0}")]
    Evaluation(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("corrupt bundle: {0}")]
    Corruption(String),
    #[error("unsupported bundle version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
