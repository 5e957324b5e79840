use thiserror::Error;

/// Errors raised by the numerical routines and samplers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GgmError {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric: |m[{i}][{j}] - m[{j}][{i}]| = {gap:e}")]
    NotSymmetric { i: usize, j: usize, gap: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no value of entry ({i}, {j}) in [-1, 1] keeps the matrix positive definite")]
    NoValidInterval { i: usize, j: usize },
    #[error("truncation constant has zero mass")]
    ZeroMass,
    #[error("edge table for ({i}, {j}) has no positive weight")]
    EmptyTable { i: usize, j: usize },
    #[error("requested {requested} graphs but only {visited} distinct graphs were visited")]
    GraphUnvisited { requested: usize, visited: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("chain aborted at iteration {iteration} while updating {parameter}: {source}")]
    ChainAbort {
        iteration: usize,
        parameter: String,
        #[source]
        source: Box<GgmError>,
    },
}

pub type Result<T> = std::result::Result<T, GgmError>;
