//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("cell ({row}, {col}) is not a number: {text:?}")]
    BadCell {
        row: usize,
        col: usize,
        text: String,
    },

    #[error("dataset has no columns")]
    NoColumns,

    #[error("no rows left after dropping rows with missing values")]
    AllRowsMissing,

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("jacobi eigensolver did not converge after {0} sweeps")]
    NoConvergence(usize),

    #[error("matrix is not positive definite (pivot {0})")]
    NotPositiveDefinite(usize),

    #[error("covariance matrix is zero; explained variance is undefined")]
    ZeroCovariance,

    #[error("constant vector: correlation is undefined")]
    ConstantVector,

    #[error("sensor {0:?} is constant in this split; correlation is undefined")]
    ConstantSensor(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
