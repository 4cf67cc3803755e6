use thiserror::Error;

/// Errors raised by the numerical and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CslError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to converge or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The model lacks a capability the operation needs (for example a density).
    #[error("missing capability: {0}")]
    Missing(String),

    #[error("io error: {0}")]
    Io(String),
}

impl CslError {
    pub fn domain(msg: impl Into<String>) -> Self {
        CslError::Domain(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CslError::Numeric(msg.into())
    }
}

impl From<std::io::Error> for CslError {
    fn from(e: std::io::Error) -> Self {
        CslError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CslError>;
