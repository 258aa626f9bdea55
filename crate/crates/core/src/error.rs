use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("accuracy target not reached: value {value:e}, estimated relative error {estimate:e}")]
    Accuracy { value: f64, estimate: f64 },

    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid scenario: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
