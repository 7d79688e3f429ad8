use crate::poly::PolyRef;

pub type Result<T> = std::result::Result<T, Error>;

/// Library-wide error type. Structural errors (dangling refs, dimension
/// mismatches) indicate caller bugs; capacity and parse errors are expected
/// at runtime boundaries.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("polynomial reference {0:?} does not resolve in the registry")]
    DanglingRef(PolyRef),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degree {degree} exceeds monomial expansion cap {cap}")]
    DegreeCapExceeded { degree: usize, cap: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
