//! Crate-wide error type.
//!
//! Exit-code mapping for the CLI lives in [`crate::cli`]: usage errors exit 1,
//! data/validation errors exit 2, training divergence exits 3.

use thiserror::Error;

use crate::ssgan::LossBreakdown;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not fit the operation.
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An index (token id, class id, axis) is out of range.
    #[error("{what}: index {index} out of range (limit {limit})")]
    Index {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    /// A documented precondition was violated.
    #[error("{0}")]
    Contract(String),

    /// Malformed input file.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    /// A record carries a label outside the declared class set.
    #[error("{path}:{line}: unknown label {label:?} (classes: {classes:?})")]
    Label {
        path: String,
        line: usize,
        label: String,
        classes: Vec<String>,
    },

    /// Two records share an id.
    #[error("{path}:{line}: duplicate id {id:?}")]
    DuplicateId {
        path: String,
        line: usize,
        id: String,
    },

    /// A split request does not fit the corpus.
    #[error("split capacity: {msg}")]
    Capacity { msg: String },

    /// Bad file format (embedding files, checkpoints, vocab files).
    #[error("{path}: {msg}")]
    Format { path: String, msg: String },

    /// Invalid configuration value.
    #[error("config: {msg}")]
    Config { msg: String },

    /// A loss became non-finite during training.
    #[error("training diverged: non-finite loss ({breakdown:?})")]
    Divergence { breakdown: LossBreakdown },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
