//! Crate-wide error type.

use thiserror::Error;

/// Unified error type for model construction, simulation, estimation, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Two latent vectors (or a vector and a world) disagree on dimension.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A configuration value violates its documented range or invariant.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input data (ids out of range, empty where non-empty required, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A simulated round violated the protocol (duplicate slate entries,
    /// already-consumed items, nothing available to consume, ...).
    #[error("invalid round: {0}")]
    InvalidRound(String),

    /// Training left the finite domain and cannot continue.
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    /// The exhaustive policy-tree search was asked to handle an instance
    /// beyond its hard size limits.
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    /// Not enough observations to perform the requested fit or sample.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A data file failed validation; `line` is 1-based and counts the header.
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    /// I/O failure, annotated with the path involved.
    #[error("io error on {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// JSON (de)serialization failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches a path to a raw I/O error.
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
