use thiserror::Error;

/// Errors surfaced by the library and mapped to CLI exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument to a library operation (dimension mismatch, empty input, out-of-range value).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Malformed or inconsistent experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical failure (bracket not found, non-finite intermediate).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Calibration could not meet its target or the response was non-monotone.
    #[error("calibration failure: {0}")]
    Calibration(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// CLI exit code: 2 for config/input errors, 3 for numeric/calibration failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_) | Error::Config(_) | Error::Io(_) => 2,
            Error::Numeric(_) | Error::Calibration(_) => 3,
        }
    }
}
