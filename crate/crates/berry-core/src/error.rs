//! Error taxonomy shared by the whole pipeline.
//!
//! The variants map onto the CLI exit-code contract: `Config`, `Usage`,
//! `Shape`, `Integrity`, `Generation` and `Io` are user/input errors
//! (exit 2); `Numerical` and `Infeasible` are runtime numerical failures
//! (exit 3).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value or combination.
    #[error("config error: {0}")]
    Config(String),

    /// An operation was called outside its contract (bad arguments, wrong
    /// call sequence).
    #[error("usage error: {0}")]
    Usage(String),

    /// Tensor/vector dimension mismatch.
    #[error("shape error: {0}")]
    Shape(String),

    /// A file or in-memory structure violates its format invariants.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Procedural generation could not satisfy its invariants.
    #[error("generation error: {0}")]
    Generation(String),

    /// Non-finite values where finite ones are required (diverged training,
    /// invalid numeric input).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A physically infeasible regime (e.g. thrust deficit).
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable process exit code for the CLI contract: 2 for user/config
    /// errors, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::Infeasible(_) => 3,
            _ => 2,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
