//! Impression log data model and the text format it is stored in.

mod record;
mod stream;
mod text;
mod validate;

use thiserror::Error;

pub use record::{
    is_numeric_feature, CandidateRecord, FeatureValue, FeatureVector, ImpressionRecord,
    MAX_FEATURE_ID, MAX_SLOTS,
};
pub use stream::{open_log, read_log, stream_impressions, ImpressionReader, LogWriter, ParseMode};
pub use text::{parse_impression, parse_impression_at, serialize_impression, write_impression};
pub use validate::{validate_log, ValidationReport, Violation};

#[derive(Debug, Error)]
pub enum LogError {
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line}: candidate count mismatch: header declares {declared}, found {found}")]
    CandidateCountMismatch {
        line: usize,
        declared: usize,
        found: usize,
    },
    #[error("line {line}: propensity: non-positive value {value}")]
    NonPositivePropensity { line: usize, value: f64 },
    #[error("line {line}: feature: id {id} out of range 1..35")]
    FeatureIdOutOfRange { line: usize, id: u64 },
    #[error("line {line}: feature: numeric feature {id} carries multiple values")]
    NumericMultiValued { line: usize, id: u8 },
    #[error("line {line}: feature: code {code} repeated for feature {id}")]
    DuplicateCode { line: usize, id: u8, code: u64 },
    #[error("line {line}: exid: expected {expected}, found {found}")]
    ExIdMismatch {
        line: usize,
        expected: u64,
        found: u64,
    },
    #[error("line {line}: {field}: {reason}")]
    InvalidField {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("impression {index}: {source}")]
    AtImpression {
        index: usize,
        #[source]
        source: Box<LogError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LogError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        LogError::InvalidRecord(msg.into())
    }

    pub(crate) fn at(index: usize, source: LogError) -> Self {
        LogError::AtImpression {
            index,
            source: Box::new(source),
        }
    }

    /// The innermost error, skipping impression-index wrappers.
    pub fn root(&self) -> &LogError {
        match self {
            LogError::AtImpression { source, .. } => source.root(),
            other => other,
        }
    }
}
