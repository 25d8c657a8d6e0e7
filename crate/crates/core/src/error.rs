//! Error types shared across the solver stack.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not conform to grid: expected {expected} nodes, got {got}")]
    Conformance { expected: usize, got: usize },

    #[error("non-finite field entry {0}")]
    NonFinite(f64),

    #[error("input must have zero mean: mean = {mean:e} with scale {scale:e}")]
    NonZeroMean { mean: f64, scale: f64 },

    #[error("potential evaluated outside its domain at r = {r}")]
    PotentialDomain { r: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve failed in {what}: relative residual {residual:e}")]
    LinearSolve { what: String, residual: f64 },

    #[error("Newton iteration diverged at step {step}: residual {residual:e} after {iters} iterations")]
    NewtonDiverged { step: usize, iters: usize, residual: f64 },

    #[error(
        "separation violated at step {step}: converged state touches the clipped region (min {min}, max {max})"
    )]
    SeparationViolation { step: usize, min: f64, max: f64 },

    #[error("compatibility check failed: {0}")]
    Compatibility(String),

    #[error("line search stalled at iteration {iter} after {halvings} step halvings")]
    LineSearchStalled { iter: usize, halvings: usize },
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// Failure class for process exit codes: config = 2, state solve = 3,
    /// sensitivity/linear algebra = 4, line search = 5.
    pub fn failure_class(&self) -> u8 {
        match self {
            CoreError::InvalidGrid(_)
            | CoreError::InvalidParameter(_)
            | CoreError::Conformance { .. }
            | CoreError::NonFinite(_)
            | CoreError::Compatibility(_) => 2,
            CoreError::NewtonDiverged { .. }
            | CoreError::SeparationViolation { .. }
            | CoreError::PotentialDomain { .. } => 3,
            CoreError::LinearSolve { .. } | CoreError::NonZeroMean { .. } => 4,
            CoreError::LineSearchStalled { .. } => 5,
        }
    }
}
