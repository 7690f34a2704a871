use thiserror::Error;

#[derive(Debug, Error)]
pub enum FluxError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numeric instability: {0}")]
    NumericInstability(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("inference before training")]
    InferenceBeforeTraining,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FluxError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FluxError::Config(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        FluxError::Precondition(msg.into())
    }

    pub(crate) fn dim(what: &'static str, expected: usize, got: usize) -> Self {
        FluxError::Dimension {
            what,
            expected,
            got,
        }
    }
}

pub type Result<T, E = FluxError> = std::result::Result<T, E>;
