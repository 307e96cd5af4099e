use thiserror::Error;

use crate::solver::SolveReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("target measure has no points")]
    EmptyTarget,

    #[error("target points {first} and {second} coincide")]
    DuplicatePoint { first: usize, second: usize },

    #[error("weight {weight} at index {index} is not positive")]
    NonpositiveWeight { index: usize, weight: f64 },

    #[error("total mass {total} differs from 1 by more than {tolerance}")]
    MassMismatch { total: f64, tolerance: f64 },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operation requires dimension 2, got {0}")]
    DimensionUnsupported(usize),

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cell {cell} becomes empty along the integration path")]
    PathLeavesAdmissibleSet { cell: usize },

    #[error("facet measures are unavailable for Monte Carlo cell statistics")]
    FacetMeasuresUnavailable,

    #[error("initial heights leave cell {cell} empty and the bootstrap could not repair it")]
    InitialPointOutsideH { cell: usize },

    #[error("no convergence after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual())]
    MaxIterations(Box<SolveReport>),

    #[error("line search step fell below the minimum after {} iterations (residual {:.3e})", .0.iterations, .0.final_residual())]
    StepUnderflow(Box<SolveReport>),

    #[error("singularity threshold must be positive, got {0}")]
    ThresholdNonpositive(f64),

    #[error("point {0:?} lies outside the source domain")]
    PointOutsideDomain(Vec<f64>),

    #[error("diagram vertex {0} not found")]
    VertexNotFound(usize),

    #[error("problem size {0} exceeds the limit of 1e6 cost entries")]
    SizeLimitExceeded(usize),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("csv error: {0}")]
    Csv(String),
}
