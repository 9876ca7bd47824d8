use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("rank mismatch: {left} vs {right}")]
    RankMismatch { left: usize, right: usize },

    #[error("mode {mode} out of range for an order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },

    #[error("index {index:?} out of bounds for shape {dims:?}")]
    IndexOutOfBounds { index: Vec<usize>, dims: Vec<usize> },

    #[error("duplicate coordinate {0:?}")]
    DuplicateIndex(Vec<usize>),

    #[error("invalid event at {index:?}: {reason}")]
    InvalidEvent { index: Vec<usize>, reason: String },

    #[error("system is not positive definite after jitter (trace {trace:.3e}, min pivot {pivot:.3e})")]
    Singular { trace: f64, pivot: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
