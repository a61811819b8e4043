//! Stage B: inconsistency type and inconsistent claim component.

use std::path::Path;

use candle_core::{Device, Tensor};
use ficle_core::corpus::{CharSpan, ClaimComponent, FactTriple, InconsistencyType, Label, Sample};
use ficle_core::encoding::{EncodedInput, InputEncoder};
use ficle_core::metrics::classification_report;
use ficle_core::strategy::StageBStrategy;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_bundle, save_bundle, Checkpoint, Manifest, Role, StageBHead, StageId};
use crate::config::TrainConfig;
use crate::error::{ModelError, Result};
use crate::network::{Batch, NetworkSpec};
use crate::train::{cross_entropy, fit, inverse_frequency_weights, MetricRecord, StageTrainReport, Validation};

const INFER_BATCH: usize = 32;

/// A label with the probability of every class in label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel<L> {
    pub label: L,
    pub scores: Vec<f32>,
}

impl<L: Label> ScoredLabel<L> {
    /// Argmax of `scores`; ties go to the lower index.
    pub fn from_scores(scores: Vec<f32>) -> Self {
        let i = argmax(&scores);
        ScoredLabel {
            label: L::from_index(i).expect("score vector matches label set"),
            scores,
        }
    }

    pub fn confidence(&self) -> f32 {
        self.scores[self.label.index()]
    }
}

pub type TypePrediction = ScoredLabel<InconsistencyType>;
pub type ComponentPrediction = ScoredLabel<ClaimComponent>;

pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl StageBHead {
    pub fn as_str(self) -> &'static str {
        match self {
            StageBHead::Type => "type",
            StageBHead::Component => "component",
        }
    }

    fn classes(self) -> usize {
        match self {
            StageBHead::Type => InconsistencyType::ALL.len(),
            StageBHead::Component => ClaimComponent::ALL.len(),
        }
    }

    fn labels(self) -> Vec<String> {
        match self {
            StageBHead::Type => InconsistencyType::names(),
            StageBHead::Component => ClaimComponent::names(),
        }
        .into_iter()
        .map(String::from)
        .collect()
    }

    fn gold(self, s: &Sample) -> usize {
        match self {
            StageBHead::Type => s.itype.index(),
            StageBHead::Component => s.component.index(),
        }
    }
}

/// Inputs of one Stage B prediction.
#[derive(Debug, Clone, Copy)]
pub struct StageBQuery<'a> {
    pub claim: &'a str,
    pub context: &'a str,
    pub srt: &'a FactTriple,
    pub context_span: &'a CharSpan,
}

impl<'a> StageBQuery<'a> {
    pub fn gold(s: &'a Sample) -> Self {
        StageBQuery {
            claim: &s.claim,
            context: &s.context,
            srt: &s.triple,
            context_span: &s.incon_context_span,
        }
    }
}

pub struct ClassifierCheckpoint {
    pub checkpoint: Checkpoint,
    heads: Vec<StageBHead>,
    with_component: bool,
    encoder: InputEncoder,
}

impl ClassifierCheckpoint {
    fn new(
        name: &str,
        strategy: StageBStrategy,
        heads: Vec<StageBHead>,
        with_component: bool,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            encoder: cfg.encoder,
            span_fields: 0,
            class_heads: heads.iter().map(|h| h.classes()).collect(),
        };
        let role = Role::Classify {
            heads: heads.clone(),
            with_component,
        };
        let mut m = Manifest::new(name, StageId::B, strategy.as_str(), role, spec, cfg);
        m.seed = seed;
        m.labels = heads.iter().map(|h| h.labels()).collect();
        Self::from_checkpoint(Checkpoint::init(m)?)
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        let Role::Classify { heads, with_component } = checkpoint.manifest.role.clone() else {
            return Err(ModelError::StrategyMismatch(format!(
                "checkpoint '{}' is not a Stage B classifier",
                checkpoint.manifest.name
            )));
        };
        for (h, labels) in heads.iter().zip(&checkpoint.manifest.labels) {
            if *labels != h.labels() {
                return Err(ModelError::BadCheckpoint {
                    path: checkpoint.manifest.name.clone().into(),
                    message: format!("{} label order differs from this build", h.as_str()),
                });
            }
        }
        let encoder = checkpoint.input_encoder()?;
        Ok(ClassifierCheckpoint {
            checkpoint,
            heads,
            with_component,
            encoder,
        })
    }

    pub fn heads(&self) -> &[StageBHead] {
        &self.heads
    }

    fn encode(&self, q: &StageBQuery, component: Option<ClaimComponent>) -> Result<EncodedInput> {
        let component = if self.with_component {
            Some(component.ok_or_else(|| ModelError::MissingInput("claim component for the type step".into()))?)
        } else {
            None
        };
        Ok(self.encoder.stage_b(q.claim, q.context, q.srt, q.context_span, component)?)
    }

    /// Class probabilities per head for each input.
    fn probabilities(&self, inputs: &[&EncodedInput]) -> Result<Vec<Vec<Vec<f32>>>> {
        let mut out: Vec<Vec<Vec<f32>>> = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFER_BATCH) {
            let batch = Batch::new(chunk, &Device::Cpu)?;
            let o = self.checkpoint.network.forward(&batch)?;
            let probs = o
                .class_logits
                .iter()
                .map(|l| Ok(candle_nn::ops::softmax(l, candle_core::D::Minus1)?.to_vec2::<f32>()?))
                .collect::<Result<Vec<_>>>()?;
            for b in 0..chunk.len() {
                out.push(probs.iter().map(|p| p[b].clone()).collect());
            }
        }
        Ok(out)
    }

    fn validate(&self, samples: &[Sample], epoch: usize, split: &str) -> Result<Validation> {
        let mut inputs = Vec::new();
        let mut kept = Vec::new();
        for s in samples {
            if let Ok(x) = self.encode(&StageBQuery::gold(s), Some(s.component)) {
                inputs.push(x);
                kept.push(s);
            }
        }
        if inputs.is_empty() {
            return Ok(Validation::default());
        }
        let refs: Vec<&EncodedInput> = inputs.iter().collect();
        let probs = self.probabilities(&refs)?;
        let mut records = Vec::new();
        let mut f1_sum = 0.0;
        for (k, &h) in self.heads.iter().enumerate() {
            let pred: Vec<usize> = probs.iter().map(|p| argmax(&p[k])).collect();
            let gold: Vec<usize> = kept.iter().map(|s| h.gold(s)).collect();
            let labels: Vec<usize> = (0..h.classes()).collect();
            let r = classification_report(&pred, &gold, &labels)?;
            f1_sum += r.weighted_f1;
            records.push(MetricRecord {
                stage: "b".into(),
                checkpoint: self.checkpoint.manifest.name.clone(),
                epoch,
                split: split.into(),
                field: h.as_str().into(),
                accuracy: Some(r.accuracy),
                weighted_f1: Some(r.weighted_f1),
                ..Default::default()
            });
        }
        Ok(Validation {
            selection: f1_sum / self.heads.len() as f64,
            records,
        })
    }

    fn train(&mut self, train: &[Sample], valid: &[Sample], cfg: &TrainConfig, report: &mut StageTrainReport) -> Result<()> {
        let mut inputs = Vec::new();
        let mut golds: Vec<Vec<u32>> = Vec::new();
        let mut excluded = 0;
        for s in train {
            match self.encode(&StageBQuery::gold(s), Some(s.component)) {
                Ok(x) => {
                    inputs.push(x);
                    golds.push(self.heads.iter().map(|h| h.gold(s) as u32).collect());
                }
                Err(e) => {
                    excluded += 1;
                    log::debug!("excluding sample {}: {e}", s.id);
                }
            }
        }
        if inputs.is_empty() {
            return Err(ModelError::EmptyTrainingSet { excluded });
        }
        let mut weights = Vec::new();
        for (k, &h) in self.heads.iter().enumerate() {
            let mut counts = vec![0usize; h.classes()];
            for g in &golds {
                counts[g[k] as usize] += 1;
            }
            let labels = h.labels();
            for (c, n) in counts.iter().enumerate() {
                if *n == 0 {
                    log::warn!("{} class '{}' has no training samples", h.as_str(), labels[c]);
                }
            }
            weights.push(if cfg.class_weighting {
                Some(Tensor::new(inverse_frequency_weights(&counts).as_slice(), &Device::Cpu)?)
            } else {
                None
            });
        }
        let (valid, split) = if valid.is_empty() {
            log::warn!("no validation samples; selecting on the training set");
            (train, "train")
        } else {
            (valid, "valid")
        };
        let this = &*self;
        let outcome = fit(
            &this.checkpoint.params,
            inputs.len(),
            cfg,
            "mean_weighted_f1",
            |idx| {
                let xs: Vec<&EncodedInput> = idx.iter().map(|&i| &inputs[i]).collect();
                let batch = Batch::new(&xs, &Device::Cpu)?;
                let out = this.checkpoint.network.forward(&batch)?;
                let mut total: Option<Tensor> = None;
                for (k, logits) in out.class_logits.iter().enumerate() {
                    let t: Vec<u32> = idx.iter().map(|&i| golds[i][k]).collect();
                    let t = Tensor::new(t.as_slice(), &Device::Cpu)?;
                    let l = cross_entropy(logits, &t, weights[k].as_ref())?;
                    total = Some(match total {
                        None => l,
                        Some(x) => (x + l)?,
                    });
                }
                Ok(total.expect("at least one head"))
            },
            |epoch| this.validate(valid, epoch, split),
        )?;
        let m = &mut self.checkpoint.manifest;
        m.selection = Some(outcome.selection.clone());
        m.train_examples = inputs.len();
        m.excluded_examples = excluded;
        report.push(&m.name.clone(), inputs.len(), excluded, outcome);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBOutput {
    pub itype: TypePrediction,
    pub component: ComponentPrediction,
}

pub struct StageBModel {
    strategy: StageBStrategy,
    parts: Vec<ClassifierCheckpoint>,
}

fn layout(strategy: StageBStrategy) -> Vec<(&'static str, Vec<StageBHead>, bool)> {
    match strategy {
        StageBStrategy::Individual => vec![
            ("type", vec![StageBHead::Type], false),
            ("component", vec![StageBHead::Component], false),
        ],
        StageBStrategy::TwoStep => vec![
            ("component", vec![StageBHead::Component], false),
            ("type", vec![StageBHead::Type], true),
        ],
        StageBStrategy::MultiTask => vec![("joint", vec![StageBHead::Type, StageBHead::Component], false)],
    }
}

impl StageBModel {
    pub fn strategy(&self) -> StageBStrategy {
        self.strategy
    }

    pub fn checkpoints(&self) -> Vec<&Checkpoint> {
        self.parts.iter().map(|p| &p.checkpoint).collect()
    }

    /// Records the training data hash in every manifest.
    pub fn set_dataset_hash(&mut self, hash: &str) {
        for p in &mut self.parts {
            p.checkpoint.manifest.dataset_hash = Some(hash.to_string());
        }
    }

    pub fn checkpoint_names(&self) -> Vec<&str> {
        self.parts.iter().map(|p| p.checkpoint.manifest.name.as_str()).collect()
    }

    pub fn predict(&self, q: &StageBQuery) -> Result<StageBOutput> {
        Ok(self.predict_batch(std::slice::from_ref(q))?.remove(0))
    }

    /// Under two_step the component is predicted first and appended to the
    /// type input.
    pub fn predict_batch(&self, queries: &[StageBQuery]) -> Result<Vec<StageBOutput>> {
        let mut types: Vec<Option<Vec<f32>>> = vec![None; queries.len()];
        let mut comps: Vec<Option<Vec<f32>>> = vec![None; queries.len()];
        for part in &self.parts {
            let inputs = queries
                .iter()
                .zip(&comps)
                .map(|(q, c)| {
                    let comp = c.as_ref().map(|p| ClaimComponent::ALL[argmax(p)]);
                    part.encode(q, comp)
                })
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&EncodedInput> = inputs.iter().collect();
            let probs = part.probabilities(&refs)?;
            for (i, p) in probs.into_iter().enumerate() {
                for (k, h) in part.heads.iter().enumerate() {
                    match h {
                        StageBHead::Type => types[i] = Some(p[k].clone()),
                        StageBHead::Component => comps[i] = Some(p[k].clone()),
                    }
                }
            }
        }
        Ok(types
            .into_iter()
            .zip(comps)
            .map(|(t, c)| StageBOutput {
                itype: ScoredLabel::from_scores(t.expect("type head ran")),
                component: ScoredLabel::from_scores(c.expect("component head ran")),
            })
            .collect())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_bundle(dir, StageId::B, self.strategy.as_str(), &self.checkpoints())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (bundle, cks) = load_bundle(dir, StageId::B)?;
        let strategy: StageBStrategy = bundle.strategy.parse().map_err(ModelError::StrategyMismatch)?;
        let parts = cks
            .into_iter()
            .map(ClassifierCheckpoint::from_checkpoint)
            .collect::<Result<Vec<_>>>()?;
        let expected = layout(strategy);
        let ok = parts.len() == expected.len()
            && parts
                .iter()
                .zip(&expected)
                .all(|(p, (_, heads, wc))| p.heads == *heads && p.with_component == *wc);
        if !ok {
            return Err(ModelError::StrategyMismatch(format!(
                "checkpoints in {} do not match strategy {strategy}",
                dir.display()
            )));
        }
        Ok(StageBModel { strategy, parts })
    }
}

/// Trains the strategy's checkpoints in order on gold triples and context
/// spans. Under two_step the component checkpoint is trained first and the
/// type checkpoint sees the gold component appended.
pub fn train_stage_b(
    train: &[Sample],
    valid: &[Sample],
    strategy: StageBStrategy,
    cfg: &TrainConfig,
) -> Result<(StageBModel, StageTrainReport)> {
    cfg.ensure_constructible()?;
    if cfg.checkpoint_family.is_generative() {
        return Err(ModelError::FamilyUnavailable(cfg.checkpoint_family.to_string()));
    }
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet { excluded: 0 });
    }
    let mut report = StageTrainReport::new("b", strategy.as_str());
    let mut parts = Vec::new();
    for (i, (name, heads, with_component)) in layout(strategy).into_iter().enumerate() {
        let mut part =
            ClassifierCheckpoint::new(name, strategy, heads, with_component, cfg, cfg.seed.wrapping_add(i as u64))?;
        part.train(train, valid, cfg, &mut report)?;
        parts.push(part);
    }
    Ok((StageBModel { strategy, parts }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        let p: TypePrediction = ScoredLabel::from_scores(vec![0.1, 0.1, 0.5, 0.2, 0.1]);
        assert_eq!(p.label, InconsistencyType::ALL[2]);
        assert_eq!(p.confidence(), 0.5);
    }

    #[test]
    fn layouts() {
        assert_eq!(layout(StageBStrategy::Individual).len(), 2);
        let two = layout(StageBStrategy::TwoStep);
        assert_eq!(two[0].0, "component");
        assert!(two[1].2);
        assert_eq!(layout(StageBStrategy::MultiTask)[0].1.len(), 2);
    }
}
