//! Crate-wide error and result types.

use std::path::PathBuf;
use thiserror::Error;

/// Errors raised by corpus handling, annotation processing, model training,
/// and analytics. Recoverable per-record problems (e.g. a malformed JSONL
/// line during corpus loading) are reported out-of-band as rejects, not as
/// `Error`; this type covers failures that abort an operation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line of an input file could not be parsed or failed validation.
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    /// Two records share an id that must be unique.
    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    /// A label lookup failed; `candidates` lists the closest known names.
    #[error("unknown label `{query}` (closest: {})", candidates.join(", "))]
    UnknownLabel {
        query: String,
        candidates: Vec<String>,
    },

    /// Two spans of the same document/annotator overlap.
    #[error("doc `{doc_id}`: spans {a:?} and {b:?} overlap")]
    OverlappingSpans {
        doc_id: String,
        a: (usize, usize),
        b: (usize, usize),
    },

    /// A statistic has no defined value for the given input
    /// (e.g. a correlation over a single-class binary column).
    #[error("undefined statistic: {0}")]
    Undefined(String),

    /// An argument or input violates a documented precondition.
    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidInput(message.into())
    }
}
