use std::path::PathBuf;

use thiserror::Error;

use crate::domain::ValidationReport;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("unknown appliance category '{0}'")]
    UnknownCategory(String),
    #[error("invalid household:\n{0}")]
    Invalid(ValidationReport),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("missing column '{0}'")]
    MissingColumn(String),
    #[error("row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("negative power, row {row} (column '{column}')")]
    NegativePower { row: usize, column: String },
    #[error("negative irradiance, row {row} (column '{column}')")]
    NegativeIrradiance { row: usize, column: String },
    #[error("timestamps: {0}")]
    Timestamps(String),
    #[error("resample factor {factor} does not divide series length {len}")]
    Resample { factor: usize, len: usize },
    #[error("day {day} not fully covered: traces hold {days} complete day(s)")]
    PartialDay { day: usize, days: usize },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("k = {k} exceeds the number of vectors ({n})")]
    TooFewVectors { k: usize, n: usize },
    #[error("k must be at least 1")]
    ZeroClusters,
    #[error("vectors have unequal lengths ({0} vs {1})")]
    Ragged(usize, usize),
    #[error("no irradiance days supplied")]
    NoDays,
    #[error("series length {len} does not map onto {slots} slots")]
    GridMismatch { len: usize, slots: usize },
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid household:\n{0}")]
    Invalid(ValidationReport),
    #[error("scenario grid mismatch: {0}")]
    GridMismatch(String),
    #[error("slot {t} outside window [{alpha}, {beta}]")]
    OutsideWindow { t: usize, alpha: usize, beta: usize },
    #[error("power factor must lie in (0, 1], got {0}")]
    PowerFactor(f64),
    #[error("objective index must be 1..=4, got {0}")]
    ObjectiveIndex(usize),
    #[error("assignment covers {got} variables, problem has {expected}")]
    MissingVariable { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("time limit reached without an incumbent")]
    TimeLimit,
    #[error("backend '{backend}' failed: {message}")]
    Backend { backend: String, message: String },
    #[error("unknown solver backend '{0}'")]
    UnknownBackend(String),
    #[error("all case weights are zero")]
    ZeroWeights,
    #[error("case {0} has negative or non-finite weights")]
    InvalidWeights(usize),
    #[error("stand-alone optimum unavailable for {0}")]
    MissingOptimum(String),
    #[error("oracle enumeration budget exceeded: {0} candidates")]
    Budget(u128),
    #[error("oracle: {0}")]
    Oracle(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("bin count must be at least 2, got {0}")]
    Bins(usize),
}
