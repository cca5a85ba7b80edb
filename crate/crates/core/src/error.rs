//! Shared error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Weights that do not describe a probability distribution.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// The offspring variance is zero, so the `k(k-1)` bias is undefined.
    #[error("offspring variance is zero; the second-factorial bias is undefined")]
    DegenerateVariance,

    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A combinatorial or population bound was exceeded.
    #[error("capacity exceeded: {what} would exceed the configured bound of {bound}")]
    Capacity { what: String, bound: u64 },

    /// A stated precondition does not hold for the supplied inputs.
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T> = std::result::Result<T, Error>;
