use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Fixed-point solve hit its iteration cap before reaching tolerance.
    #[error("no convergence after {iterations} iterations (best residual {residual:e})")]
    NoConvergence { residual: f64, iterations: u64 },

    /// A trajectory left the finite range; carries the last turn that was
    /// still finite so partial output can be reported.
    #[error("run diverged after turn {last_finite_t}: {what}")]
    Diverged { last_finite_t: u64, what: String },

    #[error("timescale condition violated: {0}")]
    Timescale(String),

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
        Error::InvalidInput(msg.into())
    }

    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
}
