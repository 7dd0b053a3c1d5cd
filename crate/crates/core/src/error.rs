use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the workbench.
///
/// Each variant maps onto one of three coarse classes (see [`ErrorClass`])
/// which the command-line front end turns into process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("continuity error at line {line}: {message}")]
    Continuity { line: usize, message: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("series too short: need {needed} records, have {have}")]
    TooShort { needed: usize, have: usize },

    #[error("split boundary {0} leaves an empty partition or lies outside the series")]
    BoundaryOutOfRange(String),

    #[error("price series is constant; standard deviation is zero")]
    ZeroVariance,

    #[error("unsupported storage spec: {0}")]
    UnsupportedSpec(String),

    #[error("horizon too long for exhaustive search: {0} > {1}")]
    HorizonTooLong(usize, usize),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("model file error: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping of errors for exit-code reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Numerical(_) => ErrorClass::Numerical,
            Error::Config(_) | Error::InvalidInput(_) | Error::UnsupportedSpec(_) => {
                ErrorClass::Usage
            }
            _ => ErrorClass::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
