use thiserror::Error;

/// Errors raised by the numerical and modelling routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric: |A[{i},{j}] - A[{j},{i}]| = {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },

    #[error("cholesky failed after escalating jitter to {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("zero pivot at diagonal index {0}")]
    ZeroPivot(usize),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{name} argument {value} lies outside [-1, 1]")]
    Domain { name: &'static str, value: f64 },

    #[error("sampler: {0}")]
    Sampler(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("rows are not paired by dataset id: {}", .0.join(", "))]
    Unpaired(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
