use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SgError {
    #[error("level {level} exceeds the configured maximum {max}")]
    LevelTooLarge { level: usize, max: usize },

    #[error("invalid cycle: vertices {0} and {1} are not adjacent")]
    InvalidCycle(usize, usize),

    #[error("level 0 has no previous level")]
    NoPreviousLevel,

    #[error("argument error: {0}")]
    Argument(String),

    #[error("lambda = {lambda} is within {tol:e} of the cell root {root} (cell determinant {det:e})")]
    NearSingular { lambda: f64, root: f64, det: f64, tol: f64 },

    #[error("eigensolver did not converge: {0}")]
    NoConvergence(String),

    #[error("negative eigenvalue {0:e} in a positive semidefinite operator")]
    NegativeEigenvalue(f64),

    #[error("no real preimage: discriminant {0:e}")]
    NonRealPreimage(f64),

    #[error("classification is indeterminate")]
    Indeterminate,

    #[error("inconsistent multiplicity transfer: {0}")]
    Inconsistent(i64),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("unsupported flux: {0}")]
    UnsupportedFlux(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, SgError>;
