//! Span and classification evaluation.

mod classification;
mod span;

pub use classification::{classification_report, ClassMetrics, ClassificationReport, ConfusionMatrix};
pub use span::{
    categorize_span_error, coverage, coverage_by_length, exact_match, length_by_correctness, normalize, span_error_histogram,
    span_scores, token_iou, tokens, BucketCoverage, ErrorHistogram, LengthBucket, LengthByCorrectness, SpanErrorCategory,
    SpanScores,
};
