//! Crate-wide error type.

/// Errors surfaced by constructors, operator assembly and solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("missing derivative data: {0}")]
    MissingDerivs(String),

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    #[error("series not contracting: {0}")]
    NotContracting(String),

    #[error("entry gate failed: {0}")]
    GateFailed(String),

    #[error("newton diverged after {iterations} iterations (residuals {last_residuals:?})")]
    Divergence {
        iterations: usize,
        last_residuals: Vec<f64>,
    },

    #[error("max iterations ({0}) reached before tolerance")]
    MaxIter(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParam(msg.into())
    }
}
