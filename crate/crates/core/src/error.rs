use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coupling table does not match engine parameters: {0}")]
    TableMismatch(String),

    #[error("no local minimum of the mean phonon number inside the scan window [0, {window}] (units of 1/Omega)")]
    NoMinimum { window: f64 },

    #[error("integration did not converge: {0}")]
    Convergence(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("quantity is undefined: {0}")]
    Undefined(String),

    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
