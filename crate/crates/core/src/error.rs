use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    /// Threshold policy misuse, e.g. an acceptance threshold below 2.
    #[error("policy error: {0}")]
    Policy(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("best-response solver failed at eta={eta}: {msg}")]
    Solver { eta: f64, msg: String },

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Parse { .. } | Error::Policy(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
