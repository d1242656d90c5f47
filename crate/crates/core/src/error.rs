use thiserror::Error;

use crate::space::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration space: {0}")]
    InvalidSpace(String),

    #[error("invalid fidelity ladder: {0}")]
    InvalidLadder(String),

    #[error("budget {0} is not on the fidelity ladder")]
    BudgetNotOnLadder(u64),

    #[error("budget too small for one full-length hyperband: total {total} < {required}")]
    BudgetTooSmall { total: u64, required: u64 },

    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("worker: {0}")]
    Worker(String),

    #[error("malformed run log at line {line}: {message}")]
    RunLog { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Failure of a single objective evaluation. The bracket engine turns these
/// into an infinite loss; they never abort a run.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("invalid budget {0}")]
    InvalidBudget(u64),
    #[error("evaluation {id} timed out")]
    Timeout { id: u64 },
    #[error("worker disconnected while evaluating request {id}")]
    Disconnected { id: u64 },
    #[error("worker reported error for request {id}: {message}")]
    Worker { id: u64, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("objective returned a non-finite loss")]
    NonFinite,
}
