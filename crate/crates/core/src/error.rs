use crate::manifold::ManifoldPoint;

/// Crate-wide error type.
///
/// `CutLocus`, `NoConvergence` and `SingularSystem` are numerical failures
/// (CLI exit code 3); the remaining variants are argument, format or IO
/// problems (exit code 2).
#[derive(Debug, thiserror::Error)]
pub enum MvrError {
    #[error("manifold mismatch: {left} vs {right}")]
    ManifoldMismatch { left: String, right: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} violates the {manifold} constraint by {violation:.3e}")]
    ConstraintViolation {
        what: String,
        manifold: String,
        violation: f64,
    },

    #[error("cut locus: {0}")]
    CutLocus(String),

    /// Iteration ran out of budget. Carries the last iterate when the caller
    /// may want to inspect or resume from it.
    #[error("no convergence in {context}: residual {residual:.3e} after {iters} iterations")]
    NoConvergence {
        context: String,
        residual: f64,
        iters: usize,
        last: Option<Box<ManifoldPoint>>,
    },

    #[error("singular linear system in {context}: condition estimate {cond:.3e}")]
    SingularSystem { context: String, cond: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MvrError {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            MvrError::CutLocus(_) | MvrError::NoConvergence { .. } | MvrError::SingularSystem { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, MvrError>;
