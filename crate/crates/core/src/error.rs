use thiserror::Error;

/// Errors raised by the recalibration library.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// Operation not available for this estimator (e.g. a density of a step CDF).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    /// A flow inversion or forward pass produced a non-finite value.
    #[error("flow evaluation failed: {0}")]
    Flow(String),

    /// Iterative fitting produced a non-finite loss.
    #[error("optimizer diverged: {0}")]
    Divergence(String),

    #[error("invalid serialized data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain { op, detail: detail.into() }
}
