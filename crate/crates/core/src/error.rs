use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A probability, count or other parameter is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The correlation makes at least one joint probability negative.
    #[error("infeasible correlation rho = {rho} for p = {p}, k = {k}")]
    InfeasibleRho { p: f64, rho: f64, k: usize },

    /// The C/R sampler only exists for non-positive correlation.
    #[error(
        "sampler instantiation needs rho <= 0 and p, q >= sqrt(-rho*p*q); got p = {p}, rho = {rho}"
    )]
    SamplerInfeasible { p: f64, rho: f64 },

    /// The estimator divides by p - q.
    #[error("estimator undefined: p ({p}) must exceed q ({q})")]
    DegenerateEstimator { p: f64, q: f64 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    /// Exact enumeration is capped to keep the state space tractable.
    #[error("enumeration over n = {n} contributors exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
