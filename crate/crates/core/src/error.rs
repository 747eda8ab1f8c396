use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An operation received a matrix with no entries.
    #[error("empty matrix")]
    EmptyMatrix,

    /// Entry buffer length does not match the declared shape.
    #[error("shape {rows}x{cols} needs {expected} entries, got {actual}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },

    /// A NaN or infinite value was found at construction time.
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    /// Operand shapes are incompatible.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input was required to be symmetric.
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    /// Columns were required to be orthonormal.
    #[error("columns are not orthonormal (max |VtV - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    /// Input was required to be positive definite.
    #[error("matrix is not positive definite (lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})")]
    NotPositiveDefinite { lambda_min: f64, lambda_max: f64 },

    /// Requested rank exceeds what the dimensions allow.
    #[error("rank {rank} exceeds limit {limit}")]
    RankTooLarge { rank: usize, limit: usize },

    /// A linear system or Sylvester operator is numerically singular.
    #[error("singular system: {0}")]
    Singular(String),

    /// An iterative method hit its iteration cap.
    #[error("no convergence after {iterations} iterations (last residual {last:e})")]
    NonConvergence {
        iterations: usize,
        last: f64,
        trace: Vec<f64>,
    },

    /// Input data is degenerate for the requested estimator.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A scalar parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix text could not be parsed.
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse {
        line: usize,
        column: usize,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
