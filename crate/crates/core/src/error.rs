use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid network: {0}")]
    InvalidSpec(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("state space of {states} exceeds the cap of {cap}; use bounds or iterative estimates instead")]
    CapacityExceeded { states: u128, cap: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("chain is not irreducible ({0})")]
    Reducible(String),

    #[error("structural check failed on {block}: {detail}")]
    Structural { block: String, detail: String },

    #[error("internal inconsistency: {0}")]
    Inconsistency(String),

    #[error("mixture parameters must be pairwise distinct (collision at {0})")]
    CoincidentParams(f64),

    #[error("precision budget exceeded: {0}")]
    Precision(String),

    #[error("degenerate distribution: {0}")]
    Degenerate(String),

    #[error("discretization step too coarse: lambda*tau = {0} >= 1")]
    StepTooCoarse(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
