use std::path::PathBuf;

use thiserror::Error;

use crate::encoding::Section;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("unknown {kind} label '{value}'")]
pub struct LabelError {
    pub kind: &'static str,
    pub value: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field '{field}': {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("need at least {required} samples, got {got}")]
    TooFewSamples { required: usize, got: usize },
    #[error("empty sample list")]
    Empty,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EncodingError {
    #[error("this input variant requires the fact triple")]
    MissingStructure,
    #[error("generation target needs at least one field")]
    EmptyTarget,
    #[error("section {0:?} is not present in the encoded input")]
    MissingSection(Section),
    #[error("span [{start}, {end}) lies outside section {section:?} ({len} chars)")]
    SpanOutsideSection {
        section: Section,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("span [{start}, {end}) of section {section:?} was truncated away")]
    SpanTruncated {
        section: Section,
        start: usize,
        end: usize,
    },
    #[error("span [{start}, {end}) of section {section:?} covers no tokens")]
    NoTokens {
        section: Section,
        start: usize,
        end: usize,
    },
    #[error("input needs {needed} tokens but the budget is {budget} and only context may be truncated")]
    TooLong { needed: usize, budget: usize },
    #[error("marker strings must be distinct and non-empty")]
    InvalidScheme,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("predictions ({pred}) and gold labels ({gold}) differ in length")]
    LengthMismatch { pred: usize, gold: usize },
    #[error("no items to score")]
    Empty,
    #[error("label '{0}' is not in the label order")]
    UnknownLabel(String),
    #[error("confusion matrix must be square with one row per label")]
    BadShape,
}
