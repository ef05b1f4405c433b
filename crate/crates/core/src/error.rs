use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("value {value} outside the domain of {what}")]
    Domain { what: &'static str, value: f64 },

    #[error("degenerate image: maximum smoothed intensity {max_smoothed:e} is below {threshold:e}")]
    DegenerateImage { max_smoothed: f64, threshold: f64 },

    #[error("numerical divergence at iteration {iteration}: max |I| = {max_abs}")]
    Divergence { iteration: usize, max_abs: f64 },

    #[error("ratio image undefined: restored pixel ({x}, {y}) = {value:e} is below 1e-6")]
    RatioDivision { x: usize, y: usize, value: f64 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the numerics rather than by inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::DegenerateImage { .. })
    }
}
