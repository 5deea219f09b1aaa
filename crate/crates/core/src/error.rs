//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad values, unknown keys, inconsistent counts).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed dataset / graph / checkpoint content.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// File carries an unsupported schema version.
    #[error("unsupported schema version: {0}")]
    Version(String),

    /// Stratified split preconditions violated.
    #[error("stratification error: {0}")]
    Stratification(String),

    /// K-fold preconditions violated.
    #[error("fold error: {0}")]
    Fold(String),

    /// Unknown entity, relation, or record id.
    #[error("lookup error: {0}")]
    Lookup(String),

    /// Tensor shape mismatch.
    #[error("dimension error: {0}")]
    Shape(String),

    /// Operation requires a non-empty sequence.
    #[error("sequence error: empty input sequence")]
    EmptySequence,

    /// Training preconditions violated (empty split, empty graph, ...).
    #[error("training error: {0}")]
    Training(String),

    /// A required artifact (dataset, checkpoint) is missing on disk.
    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    /// Unsupported or malformed audio file.
    #[error("audio error: {0}")]
    Audio(String),

    /// Undefined arithmetic (percent change from zero, single time point).
    #[error("report error: {0}")]
    Report(String),

    #[error("metric error: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
