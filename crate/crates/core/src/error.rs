use thiserror::Error;

/// Errors raised anywhere in the planning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("position {position} m is outside the route [0, {length}] m")]
    OutOfRange { position: f64, length: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
