use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Cholesky failed even after the jitter was escalated to its ceiling.
    #[error("matrix is not positive definite (jitter escalated to {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error(
        "mode finding did not converge after {iterations} iterations \
         (gradient inf-norm {grad_norm:e}, objective {objective}): {reason}"
    )]
    NoConvergence {
        iterations: usize,
        grad_norm: f64,
        objective: f64,
        reason: String,
    },

    /// `|I + W K|` is not positive, so the Hessian-based approximate marginal
    /// likelihood has no real logarithm at this mode.
    #[error("determinant of I + W K is non-positive (sign {sign}, log|det| {log_abs_det})")]
    IndefiniteDeterminant { sign: f64, log_abs_det: f64 },

    /// `K^-1 + W` is not positive definite: the Hessian-based Laplace
    /// approximation has no valid covariance at this mode.
    #[error("posterior precision K^-1 + W is indefinite at the mode")]
    IndefinitePosterior,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("all {starts} optimizer starts failed: {details}")]
    AllStartsFailed { starts: usize, details: String },
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
