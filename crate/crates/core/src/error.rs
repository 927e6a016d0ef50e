use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller handed an argument outside its documented domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A text or binary input could not be decoded. `line` is 1-based and 0
    /// for binary streams.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A configuration key failed range validation.
    #[error("config error: {0}")]
    Config(String),

    /// Linear algebra broke down (singular innovation covariance etc.).
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
