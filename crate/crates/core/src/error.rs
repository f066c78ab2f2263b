use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The `(d, p)` pair is not subcritical, i.e. `p(d - 2) >= d`.
    #[error("regime: p(d-2) < d required, got d={d}, p={p}")]
    Regime { d: usize, p: f64 },
    #[error("scale window: {0}")]
    ScaleWindow(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("aborted: {0}")]
    Aborted(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
