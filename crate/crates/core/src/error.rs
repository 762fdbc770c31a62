use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum BlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid exponent: {0}")]
    Exponent(String),

    #[error("matrix is not positive definite ({what}; smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { what: String, min_eig: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BlError>;

impl BlError {
    pub(crate) fn not_pd(what: impl Into<String>, min_eig: f64) -> Self {
        BlError::NotPositiveDefinite {
            what: what.into(),
            min_eig,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        BlError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
