use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between operands")]
    GridMismatch,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at {0}")]
    NonFinite(String),
    #[error("kernel must have a vanishing delta part")]
    DeltaInKernel,
    #[error("singular diagonal correction at t = {time}; refine the grid (|det| = {det:e})")]
    SingularStep { time: f64, det: f64 },
    #[error("matrix family does not commute (max commutator norm {0:e})")]
    NonCommuting(f64),
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("graph too large: {0}")]
    GraphTooLarge(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no root in range [{0}, {1}]")]
    NoRoot(f64, f64),
    #[error("oracle did not converge after {0} halvings (last change {1:e})")]
    NoConvergence(usize, f64),
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("walk enumeration exceeds guard ({0} walks)")]
    TooManyWalks(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
