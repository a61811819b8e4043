use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InconsistencyType, Sample};
use crate::error::CorpusError;

const MIN_SAMPLES: usize = 10;

/// How samples are ordered before the 80/10/10 cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Seeded uniform shuffle.
    #[default]
    Random,
    /// Seeded shuffle within each inconsistency type, interleaved so that
    /// every prefix keeps the type proportions.
    Stratified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<Sample>,
    pub valid: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.valid.len(), self.test.len())
    }
}

/// Seeded random 80/10/10 split: `floor(0.8n)`, `floor(0.1n)`, remainder.
pub fn split_corpus(samples: &[Sample], seed: u64) -> Result<Split, CorpusError> {
    split_corpus_with(samples, seed, SplitMode::Random)
}

pub fn split_corpus_with(samples: &[Sample], seed: u64, mode: SplitMode) -> Result<Split, CorpusError> {
    let n = samples.len();
    if n < MIN_SAMPLES {
        return Err(CorpusError::TooFewSamples {
            required: MIN_SAMPLES,
            got: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order: Vec<usize> = match mode {
        SplitMode::Random => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            idx
        }
        SplitMode::Stratified => {
            let mut groups: BTreeMap<InconsistencyType, Vec<usize>> = BTreeMap::new();
            for (i, s) in samples.iter().enumerate() {
                groups.entry(s.itype).or_default().push(i);
            }
            // Each member gets the key (rank + 0.5) / group size; sorting by
            // it deals groups out proportionally.
            let mut keyed: Vec<(f64, usize, usize)> = Vec::with_capacity(n);
            for (g, members) in groups.values_mut().enumerate() {
                members.shuffle(&mut rng);
                let len = members.len() as f64;
                for (rank, &i) in members.iter().enumerate() {
                    keyed.push(((rank as f64 + 0.5) / len, g, i));
                }
            }
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            keyed.into_iter().map(|(_, _, i)| i).collect()
        }
    };
    let n_train = n * 8 / 10;
    let n_valid = n / 10;
    let take = |r: &[usize]| r.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: take(&order[..n_train]),
        valid: take(&order[n_train..n_train + n_valid]),
        test: take(&order[n_train + n_valid..]),
    })
}
