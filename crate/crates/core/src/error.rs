//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("memory budget exceeded: {0}")]
    Budget(String),
    #[error("symbol is not elliptic: {0}")]
    NotElliptic(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("square root argument not positive: {0}")]
    SqrtArgument(String),
    #[error("degenerate radial point: {0}")]
    Degenerate(String),
    #[error("threshold order excluded: {0}")]
    Threshold(String),
    #[error("formal series obstruction: {0}")]
    Obstruction(String),
    #[error("integrator failure: {0}")]
    Integrator(String),
    #[error("chart transition failure: {0}")]
    Chart(String),
    #[error("kernel does not decay: {0}")]
    KernelDecay(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}
