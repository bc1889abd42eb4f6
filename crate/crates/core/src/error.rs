//! Error type shared across the library.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Unified error enum; variants mirror the failure modes of the individual
/// modules so callers can match on the concrete condition.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure: {0}")]
    File(#[from] std::io::Error),
    #[error("csv parse failure: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("non-finite value in column '{column}', row {row}")]
    NonFiniteValue { column: String, row: usize },
    #[error("baseline controls are rank deficient (rank {rank} < {cols})")]
    RankDeficientBaseline { rank: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("weight matrix is singular")]
    SingularWeightMatrix,
    #[error("regularized system is singular: {0}")]
    SingularSystem(String),
    #[error("degenerate path: residual sum of squares vanished")]
    DegeneratePath,
    #[error("solver failed to converge: {0}")]
    ConvergenceFailure(String),
    #[error("penalty value is zero at this path point; modulus undefined")]
    ZeroPenaltySolution,
    #[error("estimator denominator (w - Z pi)'w is numerically zero")]
    ZeroDenominator,
    #[error("design is collinear: {0}")]
    CollinearDesign(String),
    #[error("standard deviation must be positive, got {0}")]
    NonpositiveSd(f64),
    #[error("no path point satisfies the Lindeberg-weight cap")]
    EmptyFeasibleSet,
    #[error("sampled modulus range too narrow: {0}")]
    InsufficientModulusRange(String),
    #[error("known error variance required but not set on the dataset")]
    MissingSigma,
    #[error("initial residuals required but not provided")]
    MissingResiduals,
    #[error("invalid simulation spec: {0}")]
    InvalidSpec(String),
}
