use std::path::PathBuf;

use thiserror::Error;

use crate::provenance::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Syntax {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: duplicate note_id `{note_id}`")]
    DuplicateNoteId { note_id: String, line: usize },

    #[error("note `{note_id}`: PHI span {start}..{end} out of bounds for text of {len} chars")]
    SpanOutOfBounds {
        note_id: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("note `{note_id}`: duplicate ICD code `{code}`")]
    DuplicateIcdCode { note_id: String, code: String },

    #[error("split manifest references unknown note_id `{0}`")]
    UnknownNoteId(String),

    #[error("patient-level split violated by {} patient(s): {}", .0.len(), .0.join(", "))]
    PatientSplitViolation(Vec<String>),

    #[error("field `{section}.{field}`: expected {expected}, found {found}")]
    ValueKind {
        section: String,
        field: String,
        expected: &'static str,
        found: String,
    },

    #[error("schema: {0}")]
    Schema(String),

    #[error("provenance bundle has {} violation(s): {}", .0.len(), summarize(.0))]
    Provenance(Vec<Violation>),

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("label lists differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate marginals: expected agreement is 1 but observed agreement is below 1")]
    DegenerateMarginals,

    #[error("item {item} has {found} ratings, expected {expected}")]
    RaggedRatings {
        item: usize,
        expected: u64,
        found: u64,
    },

    #[error("agreement needs at least {needed} items, got {got}")]
    InsufficientItems { needed: usize, got: usize },

    #[error("period `{0}` has no notes")]
    EmptyPeriod(String),

    #[error("feature unavailable: {0}")]
    FeatureUnavailable(String),

    #[error("unknown field `{0}`")]
    UnknownField(String),

    #[error("invalid pattern for category `{category}`: {message}")]
    InvalidPattern { category: String, message: String },

    #[error("split partition `{0}` is empty")]
    EmptyPartition(&'static str),

    #[error("bundle is missing `{0}`")]
    MissingBundleComponent(String),

    #[error("release already exists with different content at {0}")]
    ReleaseCollision(PathBuf),

    #[error("policy: {0}")]
    Policy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn summarize(violations: &[Violation]) -> String {
    let shown: Vec<String> = violations.iter().take(3).map(|v| v.to_string()).collect();
    if violations.len() > 3 {
        format!("{}; ...", shown.join("; "))
    } else {
        shown.join("; ")
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, err: serde_json::Error) -> Self {
        Error::Syntax {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
