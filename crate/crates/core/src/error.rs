//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by signal, network, cost, strategy, engine and analysis
/// operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Connected-graph resampling exhausted its retry budget.
    #[error("failed to generate a connected graph after {attempts} attempts (L={nodes}, p={edge_probability})")]
    GenerationFailed {
        nodes: usize,
        edge_probability: f64,
        attempts: usize,
    },

    /// Exact support enumeration would exceed the allowed budget.
    #[error("enumeration budget exceeded: C({n},{k}) = {count} supports > {budget}; use sampled mode")]
    BudgetExceeded {
        n: usize,
        k: usize,
        count: u128,
        budget: u128,
    },

    /// An iterative numeric routine failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A NaN or infinite estimate appeared mid-run.
    #[error("divergence at iteration {iteration}: node {node} produced a non-finite estimate")]
    Diverged { iteration: usize, node: usize },

    /// An internal consistency check failed; indicates a bug.
    #[error("internal inconsistency: {0}")]
    Internal(String),

    /// Reading or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A JSON document could not be parsed or serialized.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
