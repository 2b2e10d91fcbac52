use thiserror::Error;

/// Shape, index and tree-structure violations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("row {row} has length {found}, expected {expected}")]
    RaggedRows { row: usize, expected: usize, found: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("scenario index {index} out of range for {count} scenarios")]
    ScenarioOutOfRange { index: usize, count: usize },
    #[error("stage index {index} out of range for {count} stages")]
    StageOutOfRange { index: usize, count: usize },
    #[error("invalid stage layout: {0}")]
    InvalidLayout(String),
    #[error("invalid scenario partition: {0}")]
    InvalidPartition(String),
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("tree with {stages} stages exceeds the scenario limit {limit}")]
    Capacity { stages: usize, limit: usize },
}

/// Invalid quadratic-program data.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("{what}: expected length {expected}, found {found}")]
    Length { what: &'static str, expected: usize, found: usize },
    #[error("{what}: expected {expected_rows}x{expected_cols}, found {rows}x{cols}")]
    Shape { what: &'static str, expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },
    #[error("quadratic term is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("quadratic term is not positive semidefinite (min eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("bounds cross at coordinate {index}: lower {lower} > upper {upper}")]
    CrossedBounds { index: usize, lower: f64, upper: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Failures of the algorithms and their runtime.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scenario {scenario}: proximal subproblem is infeasible")]
    Infeasible { scenario: usize },
    #[error("scenario {scenario}: proximal subproblem failed: {reason}")]
    Prox { scenario: usize, reason: String },
    #[error("worker {worker} failed on scenario {scenario}: {reason}")]
    Worker { worker: usize, scenario: usize, reason: String },
    #[error("runtime error: {0}")]
    Runtime(String),
}
