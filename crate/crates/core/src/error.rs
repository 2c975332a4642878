use thiserror::Error;

use crate::subsolver::SolveError;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Schema or physics violation in a scenario definition.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The scenario is well formed but admits no feasible plan.
    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    /// The propulsion model is singular at zero speed.
    #[error("propulsion power is undefined at zero speed")]
    ZeroSpeed,

    #[error("index {index} out of range for {what} of length {len}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// An initial plan handed to a planner violates the problem constraints.
    #[error("infeasible initial plan: {0}")]
    InfeasibleInit(String),

    #[error(transparent)]
    Solver(#[from] SolveError),

    #[error("malformed plan file: {0}")]
    PlanFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
