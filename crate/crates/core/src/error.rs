use thiserror::Error;

/// Errors produced by field construction, loss evaluation and the pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("point {point:?} lies outside the domain box")]
    Domain { point: Vec<f64> },

    #[error("non-finite state encountered at step {step}")]
    Divergence { step: usize },

    #[error("reconstruction needs as many measurements as dimensions (K = {k}, N = {n})")]
    Rank { k: usize, n: usize },

    #[error("Jacobian at {point:?} is singular (condition number {condition:.3e})")]
    SingularJacobian { point: Vec<f64>, condition: f64 },

    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    #[error("underdetermined fit: {unknowns} unknowns but only {equations} data equations")]
    Underdetermined { unknowns: usize, equations: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
