//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Model parameters violate an invariant, or an operation was asked of
    /// a model kind that does not support it.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// The Kou compensator integral diverges (requires alpha1 > 1).
    #[error("divergent compensator: {0}")]
    DivergentCompensator(String),

    /// The density/tail threshold is too large to yield a real, properly
    /// signed truncation interval.
    #[error("infeasible truncation threshold: {0}")]
    InfeasibleThreshold(String),

    /// Grid/domain precondition violated.
    #[error("domain error: {0}")]
    Domain(String),

    /// The F·C·F factorization is only defined on uniform grids.
    #[error("factorization unsupported: {0}")]
    UnsupportedFactorization(String),

    /// Adaptive quadrature did not reach the requested tolerance within the
    /// subdivision budget; carries the worst entry of the jump matrix.
    #[error("quadrature failure at jump-matrix entry ({row},{col}): estimated error {err_est:e} > tolerance {tol:e}")]
    QuadratureFailure {
        row: usize,
        col: usize,
        err_est: f64,
        tol: f64,
    },

    /// A linear solve or residual check failed.
    #[error("numerical failure at step {step}: {what}")]
    NumericalFailure { what: String, step: usize },

    /// The Merton series weights are undefined (1 + eta <= 0).
    #[error("series undefined: {0}")]
    SeriesUndefined(String),

    /// The FST log-price domain does not enclose the payoff decay region.
    #[error("FST domain too small: {0}")]
    DomainTooSmall(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    /// Non-fatal: an eigenvalue diagnostic could not be computed.
    #[error("diagnostic unavailable: {0}")]
    DiagnosticUnavailable(String),

    /// Experiment descriptor or run configuration is malformed.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors caused by bad input (config, descriptor, parameters)
    /// as opposed to numerical breakdown at runtime.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel(_)
                | Error::DivergentCompensator(_)
                | Error::InfeasibleThreshold(_)
                | Error::Domain(_)
                | Error::LengthMismatch { .. }
                | Error::InvalidConfig(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
