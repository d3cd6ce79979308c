use thiserror::Error;

pub type Result<T, E = QholoError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum QholoError {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty domain mask")]
    EmptyMask,

    #[error("oracle budget exceeded: {what} needs {requested}, cap is {cap}")]
    BudgetExceeded {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("config line {line}, column {column}: {message}")]
    ConfigSyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("config key `{key}`: {message}")]
    ConfigSemantic { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl QholoError {
    pub(crate) fn grid(expected: &crate::GridSpec, found: &crate::GridSpec) -> Self {
        QholoError::GridMismatch(format!("expected {expected}, found {found}"))
    }
}
