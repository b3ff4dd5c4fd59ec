//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller handed us something malformed: bad dimensions, out-of-range
    /// parameters, a transition row that does not sum to one, and so on.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A line of an MDP file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// The sample size is too small for the requested bound: the
    /// contraction factor alpha is at least one, so the bound says nothing.
    #[error("vacuous bound: alpha = {alpha} >= 1, increase N")]
    BoundVacuous { alpha: f64 },

    /// An internal invariant failed (singular resolvent system, iteration
    /// cap exceeded). These indicate a bug, not bad input.
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
