//! Error taxonomy shared by the whole library.
//!
//! Configuration problems (bad parameters, malformed input files) are kept
//! distinct from numeric problems (divergent integrals, quadrature budgets,
//! assembly overflow) so that callers — the CLI in particular — can map them
//! to different exit codes.

use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A distribution or weight parameter violates its domain (k ≤ 0, α ≤ 0, …).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An evaluation was requested outside the mathematical domain of an
    /// operation (point outside the support, special-function argument range).
    #[error("domain error: {0}")]
    Domain(String),

    /// Adaptive integration exhausted its subdivision budget. The best
    /// estimate and its error bound are carried so callers can decide
    /// whether the partial answer is usable.
    #[error("accuracy error: {context}: best estimate {estimate} ± {error_bound}")]
    Accuracy {
        context: String,
        estimate: f64,
        error_bound: f64,
    },

    /// Operator assembly produced a non-finite or non-positive entry.
    /// Names the offending node so the user can enlarge the truncation mass.
    #[error(
        "assembly error at node {node} (x = {x}): {detail}; \
         a larger truncation mass usually resolves this"
    )]
    Assembly { node: usize, x: f64, detail: String },

    /// A GridFunction was used with an operator built on a different grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A quantity that must be finite diverged (first moment, normalization).
    #[error("moment error: {0}")]
    Moment(String),

    /// A precondition on a function argument failed (sign condition,
    /// positivity of a seed function, …).
    #[error("precondition error: {0}")]
    Precondition(String),

    /// Closed-form iterate requested beyond the supported order.
    #[error("range error: {0}")]
    Range(String),

    /// Input file could not be read.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Input file was readable but malformed.
    #[error("parse error: {0}")]
    Parse(String),

    /// The requested (family, weight) combination has no implementation.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that stem from user configuration rather than from
    /// numerics; the CLI maps these to exit code 2 (numeric errors get 3).
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::Io(_)
                | Error::Parse(_)
                | Error::Unsupported(_)
                | Error::Range(_)
        )
    }
}
