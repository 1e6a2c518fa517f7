//! Error type shared across the crate.

use std::fmt;

/// Crate-wide error enum. Variants map onto the CLI exit codes:
/// `Convergence` -> 2, `NonExistence` -> 3, `Validation`/`Parse` -> 4.
#[derive(Debug, Clone)]
pub enum Error {
    /// Evaluation outside a function's or map's domain.
    Domain(String),
    /// Invalid construction: bad grids, front slope out of range, etc.
    Structural(String),
    /// Scenario-level validation failure, names the offending field.
    Validation { field: String, msg: String },
    /// Scenario file parse failure with 1-based line number.
    Parse { line: usize, msg: String },
    /// A fixed-point iteration failed to converge.
    Convergence(String),
    /// The front equation admits no Lipschitz solution (oscillation pattern).
    NonExistence(String),
    /// I/O failure, stringified to keep the type `Clone`.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Domain(s) => write!(f, "domain error: {s}"),
            Error::Structural(s) => write!(f, "structural error: {s}"),
            Error::Validation { field, msg } => write!(f, "validation error: {field}: {msg}"),
            Error::Parse { line, msg } => write!(f, "parse error at line {line}: {msg}"),
            Error::Convergence(s) => write!(f, "convergence failure: {s}"),
            Error::NonExistence(s) => write!(f, "non-existence: {s}"),
            Error::Io(s) => write!(f, "io error: {s}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
