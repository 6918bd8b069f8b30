//! Error taxonomy shared by all modules.
//!
//! The variants map one-to-one onto the exit codes of the command-line
//! runner: configuration/domain problems, numeric failures, and capacity
//! limits are distinguishable by the caller.

use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    /// An argument violates a mathematical precondition (ℓ ≤ 0, t < 0, …).
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration invariant is violated (grids, cutoffs, windows).
    #[error("config error: {0}")]
    Config(String),

    /// A requested computation exceeds a configured size bound.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// The call sequence is wrong (mismatched grids, empty sample sets, …).
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric procedure failed to converge or produced unusable output.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A geometric constraint cannot be satisfied (surface width balance).
    #[error("constraint error: {0}")]
    Constraint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }
    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
    pub fn constraint(msg: impl Into<String>) -> Self {
        Error::Constraint(msg.into())
    }
}
