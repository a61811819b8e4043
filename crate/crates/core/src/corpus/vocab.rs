use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CoarseEntityType, FineEntityType, Label, Sample};

/// Sorted fine label vocabulary with the majority fine→coarse mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineLabelVocab {
    labels: Vec<FineEntityType>,
    coarse_of: Vec<CoarseEntityType>,
}

impl FineLabelVocab {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[FineEntityType] {
        &self.labels
    }

    pub fn index_of(&self, fine: &FineEntityType) -> Option<usize> {
        self.labels.binary_search(fine).ok()
    }

    pub fn label(&self, index: usize) -> Option<&FineEntityType> {
        self.labels.get(index)
    }

    pub fn coarse_of(&self, fine: &FineEntityType) -> Option<CoarseEntityType> {
        self.index_of(fine).map(|i| self.coarse_of[i])
    }

    pub fn contains(&self, fine: &FineEntityType) -> bool {
        self.index_of(fine).is_some()
    }

    /// Exact lookup after normalization, else nearest by edit distance.
    pub fn resolve(&self, text: &str) -> Option<(FineEntityType, bool)> {
        let f = FineEntityType::new(text);
        if self.contains(&f) {
            return Some((f, false));
        }
        if f.as_str().is_empty() {
            return None;
        }
        self.labels
            .iter()
            .min_by_key(|l| strsim::levenshtein(l.as_str(), f.as_str()))
            .map(|l| (l.clone(), true))
    }
}

/// Builds the sorted fine vocabulary from samples carrying fine labels.
/// Each fine label maps to the coarse label it co-occurs with most often;
/// ties go to the lexicographically smallest coarse name.
pub fn build_fine_label_vocab(samples: &[Sample]) -> FineLabelVocab {
    let mut cooc: BTreeMap<FineEntityType, BTreeMap<&'static str, (usize, CoarseEntityType)>> = BTreeMap::new();
    for s in samples {
        if let Some(fine) = &s.fine {
            let slot = cooc.entry(fine.clone()).or_default();
            if let Some(c) = s.coarse {
                slot.entry(c.name()).or_insert((0, c)).0 += 1;
            }
        }
    }
    let mut labels = Vec::with_capacity(cooc.len());
    let mut coarse_of = Vec::with_capacity(cooc.len());
    for (fine, counts) in cooc {
        // BTreeMap iterates coarse names in order; keep the first maximum.
        let coarse = counts
            .values()
            .fold(None::<(usize, CoarseEntityType)>, |best, &(n, c)| match best {
                Some((bn, _)) if bn >= n => best,
                _ => Some((n, c)),
            })
            .map(|(_, c)| c)
            .unwrap_or(CoarseEntityType::Others);
        labels.push(fine);
        coarse_of.push(coarse);
    }
    FineLabelVocab { labels, coarse_of }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synthetic;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    fn with_labels(pairs: &[(&str, CoarseEntityType)]) -> Vec<Sample> {
        let base = synthetic::generate(1, 0).remove(0);
        pairs
            .iter()
            .map(|(f, c)| Sample {
                coarse: Some(*c),
                fine: Some(FineEntityType::new(f)),
                ..base.clone()
            })
            .collect()
    }

    #[test]
    fn unanimous_mapping() {
        let v = build_fine_label_vocab(&with_labels(&[
            ("brand", CoarseEntityType::Entertainment),
            ("brand", CoarseEntityType::Entertainment),
        ]));
        assert_eq!(v.len(), 1);
        assert_eq!(v.coarse_of(&FineEntityType::new("brand")), Some(CoarseEntityType::Entertainment));
    }

    #[test]
    fn majority_and_tie_break() {
        use CoarseEntityType::*;
        let v = build_fine_label_vocab(&with_labels(&[
            ("age", Time),
            ("age", Quantity),
            ("age", Time),
            ("age", Time),
            ("sport", Sport),
            ("sport", Profession),
        ]));
        assert_eq!(v.coarse_of(&FineEntityType::new("age")), Some(Time));
        // 1 vs 1: "profession" < "sport".
        assert_eq!(v.coarse_of(&FineEntityType::new("sport")), Some(Profession));
        assert_eq!(v.labels()[0].as_str(), "age");
    }

    #[test]
    fn order_insensitive_and_idempotent() {
        let mut s = synthetic::generate(400, 8);
        let a = build_fine_label_vocab(&s);
        s.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(3));
        let b = build_fine_label_vocab(&s);
        assert_eq!(a, b);
        let mut sorted = a.labels().to_vec();
        sorted.sort();
        assert_eq!(sorted, a.labels());
        for x in &s {
            if let Some(f) = &x.fine {
                assert!(a.contains(f));
            }
        }
    }

    #[test]
    fn resolve_is_fuzzy() {
        let v = build_fine_label_vocab(&with_labels(&[
            ("musician", CoarseEntityType::Name),
            ("ordinal", CoarseEntityType::Quantity),
        ]));
        assert_eq!(v.resolve("Musician").unwrap(), (FineEntityType::new("musician"), false));
        assert_eq!(v.resolve("ordnal").unwrap(), (FineEntityType::new("ordinal"), true));
    }
}
