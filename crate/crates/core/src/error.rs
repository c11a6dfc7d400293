use thiserror::Error;

use crate::solver::SolverError;

#[derive(Debug, Error)]
pub enum FlexError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state elimination failed: x-block is rank deficient (pivot {pivot:.3e} below 1e-10)")]
    SingularElimination { pivot: f64 },
    #[error("unknown constraint label `{0}`")]
    UnknownLabel(String),
    #[error("constraint `{0}` is an equality and cannot be excluded")]
    EqualityExclusion(String),
    #[error("uncertainty set is not compact: {0}")]
    NonCompactComposite(String),
    #[error("invalid uncertainty set: {0}")]
    InvalidSet(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid network: {0}")]
    InvalidNetwork(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nominal point is infeasible (psi = {psi:.6e})")]
    InfeasibleNominal { psi: f64 },
    #[error("no strictly interior point (max worst-case slack {slack:.3e})")]
    NoInteriorPoint { slack: f64 },
    #[error("truncated Gaussian rejection sampling impractical (pilot acceptance {acceptance:.3e})")]
    ImpracticalTruncation { acceptance: f64 },
    #[error("problem is unbounded: {0}")]
    Unbounded(String),
    #[error("problem is infeasible: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl FlexError {
    /// True for failures caused by malformed input rather than by a solve.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            FlexError::DimensionMismatch(_)
                | FlexError::UnknownLabel(_)
                | FlexError::EqualityExclusion(_)
                | FlexError::NonCompactComposite(_)
                | FlexError::InvalidSet(_)
                | FlexError::InvalidSystem(_)
                | FlexError::InvalidNetwork(_)
                | FlexError::InvalidArgument(_)
                | FlexError::InfeasibleNominal { .. }
                | FlexError::Json(_)
                | FlexError::Io(_)
        )
    }
}

pub type Result<T, E = FlexError> = std::result::Result<T, E>;
