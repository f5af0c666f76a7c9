use thiserror::Error;

/// Errors produced by the quadrature design toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("polynomial degree {degree} exceeds recurrence table (max {max})")]
    DegreeOutOfRange { degree: usize, max: usize },

    #[error("axis {axis} out of range for dimension {dim}")]
    AxisOutOfRange { axis: usize, dim: usize },

    #[error("unknown polynomial family `{0}`")]
    UnknownFamily(String),

    #[error("half-set search infeasible: |index set| = {size} exceeds cap {cap}")]
    SearchInfeasible { size: usize, cap: usize },

    #[error("eigen-solve failed: {0}")]
    EigenFailure(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("non-finite residual at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("oracle refused: {0}")]
    OracleRefused(String),

    #[error("nodes not unisolvent for the interpolation space")]
    NotUnisolvent,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("design failed to converge (best residual {best_residual:.3e} at n = {n})")]
    DesignFailed {
        best_residual: f64,
        n: usize,
        trace: Box<crate::solver::SolveTrace>,
    },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
