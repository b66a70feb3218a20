use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error{}: {detail}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numeric { step: Option<usize>, detail: String },

    #[error("config error: {0}")]
    Config(String),

    /// Parameters fall outside the region where a closed-form result holds.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at row {row}, column '{column}': {detail}")]
    Parse {
        row: usize,
        column: String,
        detail: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn numeric(step: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            step,
            detail: detail.into(),
        }
    }
}
