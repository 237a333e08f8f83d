use thiserror::Error;

/// Errors produced by model validation and the analytic solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A probability or count field failed validation.
    #[error("invalid channel: field `{field}`: {reason}")]
    InvalidChannel { field: String, reason: String },

    /// The receiver chain has no stationary distribution over its full
    /// state space (some destination is unreachable).
    #[error("degenerate receiver chain: {0}")]
    DegenerateChain(String),

    /// A theorem was applied outside its stated hypothesis.
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    /// Stability-rank ratio lambda(1-p)/(alpha*p) is undefined.
    #[error("undefined rank ratio for source {index}: p = 0 with lambda > 0")]
    UndefinedRatio { index: usize },

    /// Simulation trace shorter than required by the verdict rule.
    #[error("trace too short: {got} post-warmup slots, need at least {need}")]
    TraceTooShort { got: usize, need: usize },

    /// Malformed configuration document.
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
