//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite numeric input: {0}")]
    NumericInput(String),

    #[error("matrix asymmetric at ({row},{col}) by {diff:e}")]
    Asymmetric { row: usize, col: usize, diff: f64 },

    #[error("matrix not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("matrix fails the symplectic condition by {residual:e}")]
    NotSymplectic { residual: f64 },

    #[error("numerical failure in {context}: residual {residual:e}")]
    NumericalFailure { context: &'static str, residual: f64 },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("unsupported tree order {order} (supported {min}..={max})")]
    UnsupportedOrder { order: usize, min: usize, max: usize },

    #[error("invalid root {root}: must be a center vertex or an endpoint of the center edge")]
    InvalidRoot { root: usize },

    #[error("labeling fails the single-parent column structure at column {column}")]
    InvalidLabeling { column: usize },

    #[error("invalid mode split: {0}")]
    InvalidSplit(String),

    #[error("unknown fixture key {0:?}")]
    UnknownFixture(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("witness cannot synthesize a detectable state: Tr[Z_W] = {trace} >= 1")]
    ConstructionInfeasible { trace: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
