use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the analysis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The series truncation order is too small for the strongest intensity
    /// level: the dropped Poisson tail would make the detection constraints
    /// vacuous.
    #[error(
        "truncation order K is vacuous at level j={level} (mu={mu}): \
         dropped tail mass {tail:.3e} exceeds 0.5"
    )]
    VacuousTruncation { level: u32, mu: f64, tail: f64 },

    /// The confidence polytope is empty. For session analysis this means the
    /// observed counts are mutually inconsistent with every yield vector and
    /// the session must be aborted.
    #[error("constraint set is infeasible")]
    Infeasible,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
