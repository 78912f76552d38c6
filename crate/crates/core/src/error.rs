use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible policy: {0}")]
    InfeasiblePolicy(String),

    #[error("unsupported size: {0}")]
    UnsupportedSize(String),

    #[error("format error at line {line}, column {column}: {message}")]
    Format {
        line: u64,
        column: u64,
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

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn infeasible(msg: impl Into<String>) -> Self {
        Error::InfeasiblePolicy(msg.into())
    }

    /// Errors raised while checking inputs, before any simulation work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::InfeasiblePolicy(_)
                | Error::UnsupportedSize(_)
                | Error::Format { .. }
                | Error::Config(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
