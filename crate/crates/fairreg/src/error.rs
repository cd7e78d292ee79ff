use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: {context} (expected {expected}, got {got})")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("dataset needs at least 2 sensitive classes, got {0}")]
    TooFewClasses(usize),

    #[error("sensitive class {class} out of range 0..{k}")]
    ClassOutOfRange { class: usize, k: usize },

    #[error("sensitive class {0} has no rows")]
    EmptyClass(usize),

    #[error("operation requires exactly 2 sensitive classes, got {0}")]
    NeedsBinarySensitive(usize),

    #[error("fold count {folds} invalid for {n} rows (need 2 <= folds <= n)")]
    BadFoldCount { folds: usize, n: usize },

    #[error("cannot subsample {m} rows from {n} while keeping all {k} classes")]
    SubsampleImpossible { m: usize, n: usize, k: usize },

    #[error("covariance matrix is not positive definite")]
    CovarianceNotPd,

    #[error("linear system is singular or not positive definite")]
    SingularSystem,

    #[error("normaliser degenerate: {value:.3e} nats (sensitive attribute carries no usable entropy)")]
    NormaliserDegenerate { value: f64 },

    #[error("inner classifier fit did not reach gradient tolerance after {iterations} iterations (|grad| = {grad_norm:.3e})")]
    InnerOptim { iterations: usize, grad_norm: f64 },

    #[error("optimiser produced a non-finite loss")]
    NonFiniteLoss,

    #[error("csv read failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("column {0:?} not found in csv header")]
    MissingColumn(String),

    #[error("row {row}: cannot parse {column:?} value {value:?} as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("no usable rows after filtering")]
    NoRows,
}

pub type Result<T> = std::result::Result<T, Error>;
