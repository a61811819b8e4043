//! Core data model, input encoding and metrics for explaining factual
//! inconsistencies between a claim and a context sentence.

pub mod corpus;
pub mod encoding;
pub mod error;
pub mod metrics;
pub mod strategy;

pub use error::{CorpusError, EncodingError, LabelError, MetricsError};
