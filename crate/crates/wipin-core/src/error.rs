//! Error type shared across the toolkit.
//!
//! Every fallible operation in this crate returns [`Result`]. Variants are
//! grouped by what went wrong rather than where: callers (notably the CLI)
//! map them onto exit codes, so the distinction that matters is
//! "bad input data" versus "bad request" versus "degenerate outcome".

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Unified error for CSI parsing, DSP, training, simulation, and evaluation.
#[derive(Debug, Error)]
pub enum Error {
    /// An operation that needs at least one frame/instance received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A text artifact (CSI CSV, feature CSV, manifest) failed to parse.
    /// `line` is 1-based and refers to the offending line of the file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Underlying file I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON (de)serialization failure for manifests, models, or configs.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// A subject does not have enough recordings for the requested split.
    #[error("subject {subject} has {available} sessions, split needs {required}")]
    InsufficientData {
        subject: u32,
        available: usize,
        required: usize,
    },

    /// A filter or transform specification is unrealizable (e.g. cutoff at
    /// or above Nyquist, zero order).
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Numeric input violated a precondition (non-finite values, negative
    /// amplitudes, wrong dimensionality).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Training labels are unusable (out of range, missing classes).
    #[error("invalid labels: {0}")]
    InvalidLabels(String),

    /// Training produced a model with no usable decision information
    /// (e.g. every training instance misclassified while calibrating the
    /// rejection threshold).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// An evaluation request is outside the supported range (cohort size,
    /// window length).
    #[error("invalid range: {0}")]
    InvalidRange(String),

    /// Cohort generation could not satisfy its constraints.
    #[error("cohort generation failed: {0}")]
    Cohort(String),
}
