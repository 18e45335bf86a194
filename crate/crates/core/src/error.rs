use thiserror::Error;

/// Reasons a raw model instance is rejected.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("network must have at least one cell")]
    Empty,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("routing entry ({row}, {col}) is negative")]
    NegativeRouting { row: usize, col: usize },
    #[error("routing diagonal entry ({0}, {0}) must be zero")]
    SelfLoop(usize),
    #[error("row {row} sum exceeds 1 (sum = {sum})")]
    RowSumExceeds { row: usize, sum: f64 },
    #[error("capacity must be positive (cell {cell} has {value})")]
    NonPositiveCapacity { cell: usize, value: f64 },
    #[error("{which} must be nonnegative (cell {cell} has {value})")]
    NegativeFlow {
        which: &'static str,
        cell: usize,
        value: f64,
    },
    #[error("demand differs from inflow - outflow at cell {cell}")]
    DemandMismatch { cell: usize },
    #[error("{0}")]
    Other(String),
}

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("invalid input: {0}")]
    Invalid(#[from] ValidationError),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("inconsistent result: {0}")]
    Inconsistent(String),
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
