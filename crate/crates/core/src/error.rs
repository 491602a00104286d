use thiserror::Error;

/// Errors produced by the coreg numerical routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoregError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("degenerate variance at index {index} (diagonal entry {value})")]
    DegenerateVariance { index: usize, value: f64 },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("design is rank deficient (condition number {condition:.3e}); collinear predictors: {predictors:?}")]
    RankDeficient { condition: f64, predictors: Vec<String> },

    #[error("insufficient samples: n = {n} but at least {required} are needed")]
    InsufficientSamples { n: usize, required: usize },

    #[error("insufficient residual degrees of freedom: n = {n}, q + K = {used}")]
    InsufficientDof { n: usize, used: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("no modules extracted; fall back to the baseline OLS fit")]
    NoModules,

    #[error("no module structure found for any lambda in the grid; fall back to the baseline OLS fit")]
    NoStructure,

    #[error("singular factor system: {0}")]
    Singular(String),

    #[error("need at least {required} tests, got {m}")]
    InsufficientTests { m: usize, required: usize },

    #[error("invalid scenario spec: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, CoregError>;
