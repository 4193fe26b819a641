use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is outside the operation's domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Every coefficient of a linear classifier is zero.
    #[error("degenerate classifier: all coefficients are zero")]
    Degenerate,

    /// `P` puts mass on an index where `Q` has none.
    #[error("absolute continuity violated at index {index}")]
    AbsoluteContinuity { index: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("construction failed: {0}")]
    Construction(String),

    /// A requested workload exceeds the configured budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    /// An identity or case analysis that must hold did not.
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
