use thiserror::Error;

/// Errors raised by tensor math, layers and the optimizer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}: empty sequence")]
    EmptySequence(&'static str),
    #[error("batch norm in train mode needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, left: &[usize], right: &[usize]) -> NnError {
    NnError::Shape {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}
