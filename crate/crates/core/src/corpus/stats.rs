use std::collections::BTreeMap;

use serde::Serialize;

use super::{ClaimComponent, CoarseEntityType, InconsistencyType, Label, Sample};
use crate::error::CorpusError;

/// Whitespace token count after trimming.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthStats {
    pub min: usize,
    pub avg: f64,
    pub max: usize,
}

impl LengthStats {
    fn from_counts(counts: impl Iterator<Item = usize>) -> LengthStats {
        let (mut min, mut max, mut sum, mut n) = (usize::MAX, 0, 0usize, 0usize);
        for c in counts {
            min = min.min(c);
            max = max.max(c);
            sum += c;
            n += 1;
        }
        LengthStats {
            min: if n == 0 { 0 } else { min },
            avg: if n == 0 { 0.0 } else { sum as f64 / n as f64 },
            max,
        }
    }
}

/// Label distributions and field lengths (in words) of a corpus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub total: usize,
    pub types: BTreeMap<String, usize>,
    pub components: BTreeMap<String, usize>,
    pub coarse_entity_types: BTreeMap<String, usize>,
    pub entity_typed: usize,
    pub claim: LengthStats,
    pub context: LengthStats,
    pub source: LengthStats,
    pub relation: LengthStats,
    pub target: LengthStats,
    pub context_span: LengthStats,
}

impl CorpusStats {
    pub fn type_count(&self, t: InconsistencyType) -> usize {
        self.types.get(t.name()).copied().unwrap_or(0)
    }

    pub fn component_count(&self, c: ClaimComponent) -> usize {
        self.components.get(c.name()).copied().unwrap_or(0)
    }
}

fn label_counts<L: Label>(labels: impl Iterator<Item = L>) -> BTreeMap<String, usize> {
    let mut counts = vec![0usize; L::ALL.len()];
    for l in labels {
        counts[l.index()] += 1;
    }
    L::ALL
        .iter()
        .zip(counts)
        .map(|(l, c)| (l.name().to_string(), c))
        .collect()
}

pub fn compute_stats(samples: &[Sample]) -> Result<CorpusStats, CorpusError> {
    if samples.is_empty() {
        return Err(CorpusError::Empty);
    }
    let lens = |f: &dyn Fn(&Sample) -> &str| LengthStats::from_counts(samples.iter().map(|s| word_count(f(s))));
    Ok(CorpusStats {
        total: samples.len(),
        types: label_counts(samples.iter().map(|s| s.itype)),
        components: label_counts(samples.iter().map(|s| s.component)),
        coarse_entity_types: label_counts::<CoarseEntityType>(samples.iter().filter_map(|s| s.coarse)),
        entity_typed: samples.iter().filter(|s| s.entity_types().is_some()).count(),
        claim: lens(&|s| &s.claim),
        context: lens(&|s| &s.context),
        source: lens(&|s| &s.triple.source.text),
        relation: lens(&|s| &s.triple.relation.text),
        target: lens(&|s| &s.triple.target.text),
        context_span: lens(&|s| &s.incon_context_span.text),
    })
}
