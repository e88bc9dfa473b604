use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {context} at ({row}, {col})")]
    NonFinite {
        context: &'static str,
        row: usize,
        col: usize,
    },
    #[error("confidence {value} at ({row}, {col}) is outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("duplicate entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("index ({row}, {col}) outside a {n_rows}x{n_cols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },
    #[error("row {row} has zero norm")]
    ZeroNormRow { row: usize },
    #[error("graph is not symmetric at ({row}, {col})")]
    AsymmetricGraph { row: usize, col: usize },
    #[error("graph has an invalid weight at ({row}, {col}): {reason}")]
    InvalidGraph {
        row: usize,
        col: usize,
        reason: &'static str,
    },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("eigendecomposition failed: {0}")]
    Eigen(&'static str),
    #[error("conjugate gradient breakdown (curvature {curvature:e}); check lambda1, lambda2 and mu")]
    CgBreakdown { curvature: f64 },
    #[error("every ground-truth row is empty")]
    EmptyTruth,
    #[error("matrix is not binary at ({row}, {col})")]
    NotBinary { row: usize, col: usize },
    #[error("noise injection needs {requested} positions but only {available} are available")]
    NoiseBudget { requested: usize, available: usize },
    #[error("self-representation has no nonzero rows")]
    DegenerateRepresentation,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field,
        reason: reason.into(),
    }
}
