use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("class '{class}' has {count} sample(s); at least 2 are required to fit")]
    TooFewSamples { class: String, count: usize },

    #[error("covariance of class '{class}' is not positive definite after regularization; use a larger ridge")]
    Singular { class: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported model format_version {found} (this build reads version {supported})")]
    Version { found: u32, supported: u32 },

    #[error("model schema error: {0}")]
    Schema(String),

    #[error("unknown class '{0}'")]
    UnknownClass(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
