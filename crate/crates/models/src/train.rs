//! Shared optimisation loop and training logs.

use std::collections::BTreeMap;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{ModelError, Result};
use crate::params::ParamStore;

/// One line of the JSONL metric log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub stage: String,
    pub checkpoint: String,
    pub epoch: usize,
    pub split: String,
    pub field: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub em: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weighted_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cosine: Option<f64>,
}

/// Validation outcome of one epoch.
#[derive(Debug, Clone, Default)]
pub struct Validation {
    /// Higher is better; drives checkpoint selection.
    pub selection: f64,
    pub records: Vec<MetricRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub selection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub criterion: String,
    pub best_epoch: usize,
    pub best_value: f64,
    pub selected_epoch: usize,
    pub select_last: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOutcome {
    pub epochs: Vec<EpochLog>,
    pub selection: Selection,
    pub records: Vec<MetricRecord>,
}

/// Training summary of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTrainReport {
    pub name: String,
    pub examples: usize,
    pub excluded: usize,
    pub epochs: Vec<EpochLog>,
    pub selection: Selection,
}

/// Training summary of a stage: its checkpoints in training order plus
/// the metric log lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrainReport {
    pub stage: String,
    pub strategy: String,
    pub checkpoints: Vec<CheckpointTrainReport>,
    pub records: Vec<MetricRecord>,
}

impl StageTrainReport {
    pub fn new(stage: &str, strategy: &str) -> Self {
        StageTrainReport {
            stage: stage.to_string(),
            strategy: strategy.to_string(),
            checkpoints: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Folds one fitted checkpoint in, adding its per-epoch train losses
    /// to the metric log.
    pub fn push(&mut self, name: &str, examples: usize, excluded: usize, outcome: FitOutcome) {
        for e in &outcome.epochs {
            self.records.push(MetricRecord {
                stage: self.stage.clone(),
                checkpoint: name.to_string(),
                epoch: e.epoch,
                split: "train".into(),
                field: "total".into(),
                loss: Some(e.train_loss),
                ..Default::default()
            });
        }
        self.records.extend(outcome.records);
        self.checkpoints.push(CheckpointTrainReport {
            name: name.to_string(),
            examples,
            excluded,
            epochs: outcome.epochs,
            selection: outcome.selection,
        });
    }
}

/// Runs `cfg.epochs` passes of AdamW over `n` examples in seeded shuffled
/// batches. `loss` maps example indices to a scalar loss; `validate` runs
/// after every epoch. Unless `cfg.select_last`, the best-validation weights
/// are restored at the end (earliest epoch wins ties).
pub fn fit(
    params: &ParamStore,
    n: usize,
    cfg: &TrainConfig,
    criterion: &str,
    mut loss: impl FnMut(&[usize]) -> Result<Tensor>,
    mut validate: impl FnMut(usize) -> Result<Validation>,
) -> Result<FitOutcome> {
    if n == 0 {
        return Err(ModelError::EmptyTrainingSet { excluded: 0 });
    }
    let mut opt = AdamW::new(
        params.vars(),
        ParamsAdamW {
            lr: cfg.effective_learning_rate(),
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_0f_ba7c4);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut records = Vec::new();
    let mut best: Option<(usize, f64, BTreeMap<String, Tensor>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let l = loss(chunk)?;
            let value = l.to_scalar::<f32>()? as f64;
            if !value.is_finite() {
                return Err(ModelError::Other(format!("non-finite loss at epoch {epoch}")));
            }
            opt.backward_step(&l)?;
            total += value;
            batches += 1;
        }
        let train_loss = total / batches as f64;
        let v = validate(epoch)?;
        log::info!(
            "epoch {epoch}/{}: train loss {train_loss:.4}, {criterion} {:.4}",
            cfg.epochs,
            v.selection
        );
        records.extend(v.records);
        if best.as_ref().is_none_or(|(_, b, _)| v.selection > *b) {
            best = Some((epoch, v.selection, params.snapshot()?));
        }
        epochs.push(EpochLog {
            epoch,
            train_loss,
            selection: v.selection,
        });
    }

    let (best_epoch, best_value, snapshot) = best.expect("at least one epoch");
    let selected_epoch = if cfg.select_last {
        cfg.epochs
    } else {
        params.restore(&snapshot)?;
        best_epoch
    };
    Ok(FitOutcome {
        epochs,
        selection: Selection {
            criterion: criterion.to_string(),
            best_epoch,
            best_value,
            selected_epoch,
            select_last: cfg.select_last,
        },
        records,
    })
}

/// Mean cross-entropy with optional per-class weights.
pub fn cross_entropy(logits: &Tensor, targets: &Tensor, weights: Option<&Tensor>) -> Result<Tensor> {
    match weights {
        None => Ok(candle_nn::loss::cross_entropy(logits, targets)?),
        Some(w) => {
            let logp = candle_nn::ops::log_softmax(logits, candle_core::D::Minus1)?;
            let picked = logp.gather(&targets.unsqueeze(1)?, 1)?.squeeze(1)?;
            let wt = w.index_select(targets, 0)?;
            let num = (picked * &wt)?.sum_all()?;
            let den = wt.sum_all()?;
            Ok(num.neg()?.div(&den)?)
        }
    }
}

/// Inverse-frequency weights normalised to mean 1 over present classes;
/// absent classes get weight 0.
pub fn inverse_frequency_weights(counts: &[usize]) -> Vec<f32> {
    let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.is_empty() {
        return vec![1.0; counts.len()];
    }
    let raw: Vec<f32> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { 1.0 / c as f32 })
        .collect();
    let mean = raw.iter().sum::<f32>() / present.len() as f32;
    raw.into_iter().map(|w| w / mean).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Tensor};

    #[test]
    fn weighted_cross_entropy_matches_plain_with_unit_weights() {
        let logits = Tensor::new(&[[1.0f32, 2.0, 0.5], [0.1, -1.0, 3.0]], &Device::Cpu).unwrap();
        let t = Tensor::new(&[1u32, 2], &Device::Cpu).unwrap();
        let w = Tensor::new(&[1.0f32, 1.0, 1.0], &Device::Cpu).unwrap();
        let a = cross_entropy(&logits, &t, None).unwrap().to_scalar::<f32>().unwrap();
        let b = cross_entropy(&logits, &t, Some(&w)).unwrap().to_scalar::<f32>().unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn inverse_weights() {
        let w = inverse_frequency_weights(&[1, 3, 0]);
        assert_eq!(w[2], 0.0);
        assert!((w[0] / w[1] - 3.0).abs() < 1e-5);
        assert!(((w[0] + w[1]) / 2.0 - 1.0).abs() < 1e-5);
    }

    #[test]
    fn fit_reduces_a_quadratic() {
        let mut p = ParamStore::new(0, Device::Cpu);
        let x = p.normal("x", &[4], 1.0).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 1,
            learning_rate: Some(0.1),
            weight_decay: 0.0,
            ..Default::default()
        };
        let target = Tensor::new(&[1.0f32, -1.0, 2.0, 0.0], &Device::Cpu).unwrap();
        let mut epoch_loss = Vec::new();
        let out = fit(
            &p,
            1,
            &cfg,
            "neg_loss",
            |_| Ok((&x - &target)?.sqr()?.sum_all()?),
            |_| {
                let l = (&x - &target)?.sqr()?.sum_all()?.to_scalar::<f32>()? as f64;
                epoch_loss.push(l);
                Ok(Validation {
                    selection: -l,
                    records: vec![],
                })
            },
        )
        .unwrap();
        assert!(epoch_loss.last().unwrap() < &epoch_loss[0]);
        assert!(out.epochs[0].train_loss > out.epochs[out.selection.best_epoch - 1].train_loss);
        // best weights restored
        let l = (&x - &target).unwrap().sqr().unwrap().sum_all().unwrap().to_scalar::<f32>().unwrap() as f64;
        assert!((l - -out.selection.best_value).abs() < 1e-6);
    }
}
