use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// Trim, collapse internal whitespace, lowercase.
pub fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Normalized whitespace tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn bag(tokens: &[String]) -> HashMap<&str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

fn overlap(a: &HashMap<&str, usize>, b: &HashMap<&str, usize>) -> usize {
    a.iter().map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0))).sum()
}

/// 1.0 when the normalized strings are identical, else 0.0.
pub fn exact_match(pred: &str, gold: &str) -> f64 {
    if normalize(pred) == normalize(gold) {
        1.0
    } else {
        0.0
    }
}

/// Multiset intersection over union of normalized tokens.
pub fn token_iou(pred: &str, gold: &str) -> f64 {
    let (p, g) = (tokens(pred), tokens(gold));
    match (p.is_empty(), g.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let inter = overlap(&bag(&p), &bag(&g));
    let union = p.len() + g.len() - inter;
    inter as f64 / union as f64
}

/// Fraction of gold tokens (multiset) present in the prediction; `None`
/// for an empty gold span.
pub fn coverage(pred: &str, gold: &str) -> Option<f64> {
    let g = tokens(gold);
    if g.is_empty() {
        return None;
    }
    let p = tokens(pred);
    Some(overlap(&bag(&p), &bag(&g)) as f64 / g.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanErrorCategory {
    Correct,
    Additive,
    Reordered,
    Changed,
    Subtractive,
}

impl SpanErrorCategory {
    pub const ALL: [SpanErrorCategory; 5] = [
        Self::Correct,
        Self::Additive,
        Self::Reordered,
        Self::Changed,
        Self::Subtractive,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Correct => "correct",
            Self::Additive => "additive",
            Self::Reordered => "reordered",
            Self::Changed => "changed",
            Self::Subtractive => "subtractive",
        }
    }
}

impl fmt::Display for SpanErrorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Checked in order: correct, reordered, additive, subtractive, changed.
pub fn categorize_span_error(pred: &str, gold: &str) -> SpanErrorCategory {
    if exact_match(pred, gold) == 1.0 {
        return SpanErrorCategory::Correct;
    }
    let (p, g) = (tokens(pred), tokens(gold));
    let (pb, gb) = (bag(&p), bag(&g));
    let inter = overlap(&pb, &gb);
    if pb == gb {
        SpanErrorCategory::Reordered
    } else if inter == g.len() {
        // gold contained in pred, and the bags differ, so pred is larger
        SpanErrorCategory::Additive
    } else if inter == p.len() {
        SpanErrorCategory::Subtractive
    } else {
        SpanErrorCategory::Changed
    }
}

fn check_lengths<A, B>(preds: &[A], golds: &[B]) -> Result<(), MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            pred: preds.len(),
            gold: golds.len(),
        });
    }
    Ok(())
}

/// Corpus means of EM and IoU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpanScores {
    pub n: usize,
    pub em: f64,
    pub iou: f64,
}

pub fn span_scores<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[G]) -> Result<SpanScores, MetricsError> {
    check_lengths(preds, golds)?;
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (mut em, mut iou) = (0.0, 0.0);
    for (p, g) in preds.iter().zip(golds) {
        em += exact_match(p.as_ref(), g.as_ref());
        iou += token_iou(p.as_ref(), g.as_ref());
    }
    let n = preds.len();
    Ok(SpanScores {
        n,
        em: em / n as f64,
        iou: iou / n as f64,
    })
}

/// Gold token-length range, inclusive; `max: None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBucket {
    pub min: usize,
    pub max: Option<usize>,
}

impl LengthBucket {
    pub fn new(min: usize, max: Option<usize>) -> Self {
        LengthBucket { min, max }
    }

    pub fn contains(&self, len: usize) -> bool {
        len >= self.min && self.max.is_none_or(|m| len <= m)
    }

    pub fn label(&self) -> String {
        match self.max {
            Some(m) if m == self.min => m.to_string(),
            Some(m) => format!("{}-{}", self.min, m),
            None => format!("{}+", self.min),
        }
    }

    pub fn default_buckets() -> Vec<LengthBucket> {
        vec![
            Self::new(1, Some(1)),
            Self::new(2, Some(2)),
            Self::new(3, Some(3)),
            Self::new(4, Some(5)),
            Self::new(6, Some(8)),
            Self::new(9, Some(12)),
            Self::new(13, None),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketCoverage {
    pub bucket: String,
    pub count: usize,
    /// `None` when no pair fell in the bucket.
    pub mean_coverage: Option<f64>,
}

/// Mean gold-token coverage per gold-length bucket. Pairs with an empty
/// gold span, or a length outside every bucket, are skipped.
pub fn coverage_by_length<P: AsRef<str>, G: AsRef<str>>(
    preds: &[P],
    golds: &[G],
    buckets: &[LengthBucket],
) -> Result<Vec<BucketCoverage>, MetricsError> {
    check_lengths(preds, golds)?;
    let mut sums = vec![(0usize, 0.0f64); buckets.len()];
    for (p, g) in preds.iter().zip(golds) {
        let len = tokens(g.as_ref()).len();
        let Some(c) = coverage(p.as_ref(), g.as_ref()) else {
            continue;
        };
        if let Some(i) = buckets.iter().position(|b| b.contains(len)) {
            sums[i].0 += 1;
            sums[i].1 += c;
        }
    }
    Ok(buckets
        .iter()
        .zip(sums)
        .map(|(b, (count, sum))| BucketCoverage {
            bucket: b.label(),
            count,
            mean_coverage: (count > 0).then(|| sum / count as f64),
        })
        .collect())
}

/// Category counts with percentages of all pairs and of erroneous pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistogram {
    pub total: usize,
    pub errors: usize,
    pub counts: BTreeMap<SpanErrorCategory, usize>,
}

impl ErrorHistogram {
    pub fn count(&self, c: SpanErrorCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn percent_of_total(&self, c: SpanErrorCategory) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count(c) as f64 / self.total as f64
        }
    }

    pub fn percent_of_errors(&self, c: SpanErrorCategory) -> f64 {
        if self.errors == 0 || c == SpanErrorCategory::Correct {
            0.0
        } else {
            100.0 * self.count(c) as f64 / self.errors as f64
        }
    }

    /// Most frequent error category; ties go to the earlier category.
    pub fn dominant_error(&self) -> Option<SpanErrorCategory> {
        SpanErrorCategory::ALL
            .into_iter()
            .filter(|&c| c != SpanErrorCategory::Correct && self.count(c) > 0)
            .max_by_key(|&c| (self.count(c), std::cmp::Reverse(c)))
    }
}

pub fn span_error_histogram<P: AsRef<str>, G: AsRef<str>>(preds: &[P], golds: &[G]) -> Result<ErrorHistogram, MetricsError> {
    check_lengths(preds, golds)?;
    let mut counts: BTreeMap<SpanErrorCategory, usize> = SpanErrorCategory::ALL.iter().map(|&c| (c, 0)).collect();
    for (p, g) in preds.iter().zip(golds) {
        *counts.entry(categorize_span_error(p.as_ref(), g.as_ref())).or_insert(0) += 1;
    }
    let total = preds.len();
    let errors = total - counts[&SpanErrorCategory::Correct];
    Ok(ErrorHistogram { total, errors, counts })
}

/// Mean gold length (tokens) of exactly matched versus other predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthByCorrectness {
    pub correct_n: usize,
    pub correct_mean: Option<f64>,
    pub incorrect_n: usize,
    pub incorrect_mean: Option<f64>,
}

pub fn length_by_correctness<P: AsRef<str>, G: AsRef<str>>(
    preds: &[P],
    golds: &[G],
) -> Result<LengthByCorrectness, MetricsError> {
    check_lengths(preds, golds)?;
    let (mut cn, mut cs, mut inn, mut is) = (0usize, 0usize, 0usize, 0usize);
    for (p, g) in preds.iter().zip(golds) {
        let len = tokens(g.as_ref()).len();
        if exact_match(p.as_ref(), g.as_ref()) == 1.0 {
            cn += 1;
            cs += len;
        } else {
            inn += 1;
            is += len;
        }
    }
    let mean = |n: usize, s: usize| (n > 0).then(|| s as f64 / n as f64);
    Ok(LengthByCorrectness {
        correct_n: cn,
        correct_mean: mean(cn, cs),
        incorrect_n: inn,
        incorrect_mean: mean(inn, is),
    })
}
