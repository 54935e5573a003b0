//! Error type shared across the engine.

use thiserror::Error;

/// Errors produced by the ranking engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violates a structural contract (unknown model, missing score,
    /// duplicate id, ...). Maps to exit code 2 in the CLI.
    #[error("schema error: {0}")]
    Schema(String),

    /// A line of an input stream could not be decoded.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An argument is outside its documented domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// A computation received input it cannot meaningfully process, e.g. a
    /// zero-variance sequence fed to a correlation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// The reviewer pool is too small to eliminate another model.
    #[error("cannot eliminate: {0}")]
    CannotEliminate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Convenience alias used across the crate.
pub type Result<T, E = Error> = std::result::Result<T, E>;
