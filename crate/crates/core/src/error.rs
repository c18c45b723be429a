use thiserror::Error;

/// Errors produced by the kernel library.
#[derive(Debug, Error)]
pub enum TckError {
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("attribute {attribute} has no observed entries")]
    EmptyAttribute { attribute: usize },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("label error: {0}")]
    Label(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("all mixture components underflow for series {series}")]
    Underflow { series: u64 },

    #[error("{failed} of {total} base models failed (more than 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("no anchored components: every class-evidence row sum is below h = {h}")]
    NoAnchoredComponents { h: f64 },

    #[error("unreachable target correlation {target}: achievable maximum is {max_achievable:.4}")]
    UnreachableCorrelation { target: f64, max_achievable: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, TckError>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(TckError::Parameter(msg.into()))
}
