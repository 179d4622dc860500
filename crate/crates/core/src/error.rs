use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsepError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not Hermitian (residual {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("matrix is not positive semidefinite (minimal eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("trace is {trace:.12} (expected 1)")]
    BadTrace { trace: f64 },

    #[error("no subsystem kept")]
    EmptyKeep,

    #[error("infeasible energy: {0}")]
    InfeasibleEnergy(String),

    #[error("no witness: {0}")]
    NoWitness(String),

    #[error("truncation annihilates state (kept weight {weight:.3e})")]
    TruncationAnnihilates { weight: f64 },

    #[error("divergent series: {0}")]
    Divergent(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, QsepError>;
