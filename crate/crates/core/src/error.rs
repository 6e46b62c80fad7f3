use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("matrix is rank deficient at column {column} (|R_jj| = {value:e})")]
    RankDeficient { column: usize, value: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("natural parameter {theta} overflows the Poisson mean map")]
    Saturation { theta: f64 },

    #[error("invalid response at row {row}: {reason}")]
    InvalidResponse { row: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fit did not converge (status {0:?})")]
    NotConverged(crate::fit::FitStatus),

    #[error("coordinate {index} out of range 1..={len}")]
    CoordinateOutOfRange { index: usize, len: usize },

    #[error("sample too small: {got} values, need at least {need}")]
    SampleTooSmall { got: usize, need: usize },

    #[error("zero column {0} cannot be rescaled")]
    ZeroColumn(usize),

    #[error("only {converged} of {total} fits converged")]
    TooFewConverged { converged: usize, total: usize },

    #[error("manifest in {} does not match the current configuration: {reason}", dir.display())]
    ManifestMismatch { dir: PathBuf, reason: String },

    #[error("no results found in {}", .0.display())]
    EmptyResults(PathBuf),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
