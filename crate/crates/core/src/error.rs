use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the simulator, diagnostics and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed or insufficient input (too few samples, unsorted times, bad lengths).
    #[error("input error: {0}")]
    Input(String),

    /// A structural precondition of an operator was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A ratio witness was requested on a field for which it is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// u went negative or v became nonpositive.
    #[error("positivity failure at t = {t}: {detail}")]
    Positivity { t: f64, detail: String },

    /// A non-finite value appeared in the solution.
    #[error("divergence failure at t = {t}: {detail}")]
    Divergence { t: f64, detail: String },

    /// Configuration problem tied to a key and a line of the config text.
    #[error("config error at line {line}, key `{key}`: {msg}")]
    Config { key: String, line: usize, msg: String },

    /// File format problem tied to a line number (1-based).
    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
