use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("shape {shape:?} has an empty or zero-sized dimension")]
    EmptyDimension { shape: Vec<usize> },
    #[error("buffer length {actual} does not match shape volume {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("{op}: invalid argument: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("expected a single-element tensor, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
}

impl TensorError {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        TensorError::Shape {
            op,
            detail: format!("shapes {lhs:?} and {rhs:?} are incompatible"),
        }
    }

    pub(crate) fn dim(op: &'static str, name: &str, expected: usize, actual: usize) -> Self {
        TensorError::Shape {
            op,
            detail: format!("dimension `{name}` expected {expected}, got {actual}"),
        }
    }

    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        TensorError::InvalidArgument {
            op,
            detail: detail.into(),
        }
    }
}
