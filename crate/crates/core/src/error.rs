use thiserror::Error;

/// Errors raised by the solvers and the model loader.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),

    #[error("type {theta} outside support [{lo}, {hi}]")]
    OutOfSupport { theta: f64, lo: f64, hi: f64 },

    #[error("invalid parameters: {0}")]
    Invalid(String),

    #[error("assumption {id} fails (margin {margin:.3e})")]
    AssumptionFailed { id: String, margin: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("target {target} outside achievable interval [{lo}, {hi}]")]
    TargetOutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("no convergence after {sweeps} sweeps (last change {change:.3e})")]
    NonConvergence { sweeps: usize, change: f64 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("non-monotone: {0}")]
    NonMonotone(String),

    #[error("numerical mismatch: {0}")]
    Mismatch(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
