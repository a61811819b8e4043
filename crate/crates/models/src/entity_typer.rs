//! Stage C: coarse and fine inconsistent entity types.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use candle_core::{DType, Device, Tensor};
use ficle_core::corpus::{build_fine_label_vocab, CharSpan, CoarseEntityType, FineEntityType, FineLabelVocab, Label, Sample};
use ficle_core::encoding::{EncodedInput, InputEncoder};
use ficle_core::metrics::classification_report;
use ficle_core::strategy::StageCStrategy;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_bundle, save_bundle, Checkpoint, EntityLevel, Manifest, Objective, Role, StageId};
use crate::classifier::{argmax, ScoredLabel};
use crate::config::TrainConfig;
use crate::error::{ModelError, Result};
use crate::network::{normalize_rows, to_f32_rows, Batch, Network, NetworkSpec};
use crate::train::{cross_entropy, fit, inverse_frequency_weights, MetricRecord, StageTrainReport, Validation};

const INFER_BATCH: usize = 32;
pub const POOLING: &str = "final_layer_summary_token_l2_centered";

/// Unit vectors for class names, in label order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassEmbeddingTable {
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f32>>,
}

impl ClassEmbeddingTable {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn tensor(&self) -> Result<Tensor> {
        let flat: Vec<f32> = self.vectors.iter().flatten().copied().collect();
        Ok(Tensor::from_vec(flat, (self.len(), self.dim()), &Device::Cpu)?)
    }

    /// Vectors plus the newline-joined label names as bytes.
    pub fn save(&self, path: &Path) -> Result<()> {
        let names = self.labels.join("\n").into_bytes();
        let n = names.len();
        let mut map = std::collections::HashMap::new();
        map.insert("vectors".to_string(), self.tensor()?);
        map.insert("labels".to_string(), Tensor::from_vec(names, n, &Device::Cpu)?);
        candle_core::safetensors::save(&map, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |m: String| ModelError::BadCheckpoint {
            path: path.to_path_buf(),
            message: m,
        };
        let map = candle_core::safetensors::load(path, &Device::Cpu).map_err(|e| bad(e.to_string()))?;
        let vectors = map.get("vectors").ok_or_else(|| bad("missing vectors".into()))?;
        let names = map.get("labels").ok_or_else(|| bad("missing labels".into()))?;
        let names = String::from_utf8(names.to_dtype(DType::U8)?.to_vec1::<u8>()?).map_err(|e| bad(e.to_string()))?;
        let labels: Vec<String> = names.split('\n').map(String::from).collect();
        let vectors = to_f32_rows(vectors)?;
        if labels.len() != vectors.len() {
            return Err(bad("label count differs from vector count".into()));
        }
        Ok(ClassEmbeddingTable { labels, vectors })
    }

    /// Cosine of `v` with every class vector.
    pub fn cosines(&self, v: &[f32]) -> Vec<f32> {
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
        self.vectors
            .iter()
            .map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum::<f32>() / norm)
            .collect()
    }

    /// Index of the most similar class and all similarities.
    pub fn nearest(&self, v: &[f32]) -> (usize, Vec<f32>) {
        let cos = self.cosines(v);
        (argmax(&cos), cos)
    }
}

/// Encodes each label as its own input and keeps the summary vector of the
/// final layer, L2-normalized, mean-centered over the labels and normalized
/// again. Untrained encoders map short names to nearly parallel vectors;
/// centering spreads them apart.
pub fn embed_class_names(network: &Network, encoder: &InputEncoder, labels: &[String]) -> Result<ClassEmbeddingTable> {
    if labels.is_empty() {
        return Err(ModelError::InvalidConfig("no class names to embed".into()));
    }
    let mut seen = HashSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(ModelError::InvalidConfig(format!("duplicate class name '{l}'")));
        }
    }
    let inputs: Vec<EncodedInput> = labels.iter().map(|l| encoder.plain(l)).collect();
    let mut vectors = Vec::with_capacity(labels.len());
    for chunk in inputs.chunks(INFER_BATCH) {
        let refs: Vec<&EncodedInput> = chunk.iter().collect();
        let out = network.forward(&Batch::new(&refs, &Device::Cpu)?)?;
        vectors.extend(to_f32_rows(&normalize_rows(&out.summary)?)?);
    }
    if vectors.len() > 1 {
        let dim = vectors[0].len();
        let mut mean = vec![0f32; dim];
        for v in &vectors {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x / labels.len() as f32;
            }
        }
        for v in &mut vectors {
            for (x, m) in v.iter_mut().zip(&mean) {
                *x -= m;
            }
            let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= norm);
        }
    }
    Ok(ClassEmbeddingTable {
        labels: labels.to_vec(),
        vectors,
    })
}

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// `(1 - cos(x, pos)) + sum over negatives of max(0, cos(x, neg) - margin)`.
pub fn cosine_embedding_objective(input: &[f32], positive: &[f32], negatives: &[&[f32]], margin: f64) -> Result<f64> {
    let d = input.len();
    if positive.len() != d || negatives.iter().any(|n| n.len() != d) {
        return Err(ModelError::InvalidConfig("vectors differ in dimension".into()));
    }
    let pos = 1.0 - cosine(input, positive);
    let neg: f64 = negatives.iter().map(|n| (cosine(input, n) - margin).max(0.0)).sum();
    Ok(pos + neg)
}

/// Batch form of the objective with every non-gold class as a negative;
/// mean over the batch. `table` rows must be unit norm.
pub fn cosine_objective_tensor(summary: &Tensor, table: &Tensor, targets: &[usize], margin: f64) -> Result<Tensor> {
    let (b, _) = summary.dims2()?;
    let c = table.dims2()?.0;
    let cos = normalize_rows(summary)?.matmul(&table.t()?)?;
    let mut onehot = vec![0f32; b * c];
    for (i, &t) in targets.iter().enumerate() {
        onehot[i * c + t] = 1.0;
    }
    let pos = Tensor::from_vec(onehot, (b, c), &Device::Cpu)?;
    let neg = pos.ones_like()?.sub(&pos)?;
    let pos_term = (pos.ones_like()? - &cos)?.mul(&pos)?;
    let neg_term = (cos - margin)?.relu()?.mul(&neg)?;
    Ok(((pos_term + neg_term)?.sum_all()? / b as f64)?)
}

/// Fine label with per-class scores in vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinePrediction {
    pub label: FineEntityType,
    pub scores: Vec<f32>,
}

/// Inputs of one Stage C prediction.
#[derive(Debug, Clone, Copy)]
pub struct StageCQuery<'a> {
    pub context_span: &'a CharSpan,
    /// Claim sub-span named by the component.
    pub claim_span: &'a CharSpan,
}

pub struct EntityCheckpoint {
    pub checkpoint: Checkpoint,
    level: EntityLevel,
    objective: Objective,
    with_coarse: bool,
    encoder: InputEncoder,
}

impl EntityCheckpoint {
    #[allow(clippy::too_many_arguments)]
    fn new(
        name: &str,
        strategy: StageCStrategy,
        level: EntityLevel,
        objective: Objective,
        with_coarse: bool,
        labels: Vec<String>,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        let spec = NetworkSpec {
            encoder: cfg.encoder,
            span_fields: 0,
            class_heads: match objective {
                Objective::CrossEntropy => vec![labels.len()],
                Objective::Cosine => vec![],
            },
        };
        let role = Role::Entity {
            level,
            objective,
            with_coarse,
        };
        let mut m = Manifest::new(name, StageId::C, strategy.as_str(), role, spec, cfg);
        m.seed = seed;
        m.labels = vec![labels.clone()];
        if objective == Objective::Cosine {
            m.class_table_pooling = Some(POOLING.into());
        }
        let mut ck = Checkpoint::init(m)?;
        if objective == Objective::Cosine {
            ck.class_table = Some(embed_class_names(&ck.network, &ck.input_encoder()?, &labels)?);
        }
        Self::from_checkpoint(ck)
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        let Role::Entity {
            level,
            objective,
            with_coarse,
        } = checkpoint.manifest.role.clone()
        else {
            return Err(ModelError::StrategyMismatch(format!(
                "checkpoint '{}' is not an entity typer",
                checkpoint.manifest.name
            )));
        };
        let labels = checkpoint.manifest.labels.first().cloned().unwrap_or_default();
        if level == EntityLevel::Coarse && labels != CoarseEntityType::names() {
            return Err(ModelError::Other("coarse label order differs from this build".into()));
        }
        if objective == Objective::Cosine {
            let table = checkpoint
                .class_table
                .as_ref()
                .ok_or_else(|| ModelError::MissingInput("class embedding table".into()))?;
            if table.labels != labels {
                return Err(ModelError::Other("class table labels differ from the manifest".into()));
            }
        }
        let encoder = checkpoint.input_encoder()?;
        Ok(EntityCheckpoint {
            checkpoint,
            level,
            objective,
            with_coarse,
            encoder,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.checkpoint.manifest.labels[0]
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn class_table(&self) -> Option<&ClassEmbeddingTable> {
        self.checkpoint.class_table.as_ref()
    }

    fn encode(&self, q: &StageCQuery, coarse: Option<CoarseEntityType>) -> Result<EncodedInput> {
        let coarse = if self.with_coarse {
            Some(coarse.ok_or_else(|| ModelError::MissingInput("coarse entity type for the fine step".into()))?)
        } else {
            None
        };
        Ok(self.encoder.stage_c(q.context_span, q.claim_span, coarse)?)
    }

    /// Softmax probabilities or cosine similarities per input.
    fn scores(&self, inputs: &[&EncodedInput]) -> Result<Vec<Vec<f32>>> {
        let table = self.class_table().map(|t| t.tensor()).transpose()?;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFER_BATCH) {
            let o = self.checkpoint.network.forward(&Batch::new(chunk, &Device::Cpu)?)?;
            let s = match (&table, self.objective) {
                (Some(t), Objective::Cosine) => normalize_rows(&o.summary)?.matmul(&t.t()?)?,
                _ => candle_nn::ops::softmax(&o.class_logits[0], candle_core::D::Minus1)?,
            };
            out.extend(to_f32_rows(&s)?);
        }
        Ok(out)
    }

    /// Summary vectors, for inspecting the embedding objective.
    pub fn summaries(&self, inputs: &[&EncodedInput]) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFER_BATCH) {
            let o = self.checkpoint.network.forward(&Batch::new(chunk, &Device::Cpu)?)?;
            out.extend(to_f32_rows(&o.summary)?);
        }
        Ok(out)
    }

    fn gold_index(&self, s: &Sample) -> Option<usize> {
        let (coarse, fine) = s.entity_types()?;
        match self.level {
            EntityLevel::Coarse => Some(coarse.index()),
            EntityLevel::Fine => self.labels().iter().position(|l| l == fine.as_str()),
        }
    }

    fn validate(
        &self,
        samples: &[&Sample],
        train_inputs: &[EncodedInput],
        train_gold: &[usize],
        epoch: usize,
        split: &str,
    ) -> Result<Validation> {
        let n = self.labels().len();
        let mut inputs = Vec::new();
        let mut gold = Vec::new();
        for s in samples {
            let q = StageCQuery {
                context_span: &s.incon_context_span,
                claim_span: s.claim_component_span(),
            };
            if let Ok(x) = self.encode(&q, s.coarse) {
                inputs.push(x);
                // Fine labels unseen in training map to an extra index.
                gold.push(self.gold_index(s).unwrap_or(n));
            }
        }
        let name = self.checkpoint.manifest.name.clone();
        let field = match self.level {
            EntityLevel::Coarse => "coarse",
            EntityLevel::Fine => "fine",
        };
        let mut records = Vec::new();
        let mut selection = 0.0;
        if !inputs.is_empty() {
            let refs: Vec<&EncodedInput> = inputs.iter().collect();
            let pred: Vec<usize> = self.scores(&refs)?.iter().map(|s| argmax(s)).collect();
            let labels: Vec<usize> = (0..=n).collect();
            let r = classification_report(&pred, &gold, &labels)?;
            selection = r.weighted_f1;
            records.push(MetricRecord {
                stage: "c".into(),
                checkpoint: name.clone(),
                epoch,
                split: split.into(),
                field: field.into(),
                accuracy: Some(r.accuracy),
                weighted_f1: Some(r.weighted_f1),
                ..Default::default()
            });
        }
        if self.objective == Objective::Cosine {
            let table = self.class_table().expect("cosine checkpoint has a table");
            let refs: Vec<&EncodedInput> = train_inputs.iter().collect();
            let sums = self.summaries(&refs)?;
            let mean = sums
                .iter()
                .zip(train_gold)
                .map(|(v, &g)| table.cosines(v)[g] as f64)
                .sum::<f64>()
                / sums.len().max(1) as f64;
            records.push(MetricRecord {
                stage: "c".into(),
                checkpoint: name,
                epoch,
                split: "train".into(),
                field: field.into(),
                mean_cosine: Some(mean),
                ..Default::default()
            });
        }
        Ok(Validation { selection, records })
    }

    fn train(&mut self, train: &[&Sample], valid: &[&Sample], cfg: &TrainConfig, report: &mut StageTrainReport) -> Result<()> {
        let mut inputs = Vec::new();
        let mut gold = Vec::new();
        let mut excluded = 0;
        for s in train {
            let q = StageCQuery {
                context_span: &s.incon_context_span,
                claim_span: s.claim_component_span(),
            };
            match (self.encode(&q, s.coarse), self.gold_index(s)) {
                (Ok(x), Some(g)) => {
                    inputs.push(x);
                    gold.push(g);
                }
                _ => excluded += 1,
            }
        }
        if inputs.is_empty() {
            return Err(ModelError::EmptyTrainingSet { excluded });
        }
        let n = self.labels().len();
        let mut counts = vec![0usize; n];
        for &g in &gold {
            counts[g] += 1;
        }
        let weights = if cfg.class_weighting && self.objective == Objective::CrossEntropy {
            Some(Tensor::new(inverse_frequency_weights(&counts).as_slice(), &Device::Cpu)?)
        } else {
            None
        };
        let table = self.class_table().map(|t| t.tensor()).transpose()?;
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
            "weighted_f1",
            |idx| {
                let xs: Vec<&EncodedInput> = idx.iter().map(|&i| &inputs[i]).collect();
                let targets: Vec<usize> = idx.iter().map(|&i| gold[i]).collect();
                let out = this.checkpoint.network.forward(&Batch::new(&xs, &Device::Cpu)?)?;
                match (&table, this.objective) {
                    (Some(t), Objective::Cosine) => cosine_objective_tensor(&out.summary, t, &targets, cfg.cosine_margin),
                    _ => {
                        let t: Vec<u32> = targets.iter().map(|&x| x as u32).collect();
                        let t = Tensor::new(t.as_slice(), &Device::Cpu)?;
                        cross_entropy(&out.class_logits[0], &t, weights.as_ref())
                    }
                }
            },
            |epoch| this.validate(valid, &inputs, &gold, epoch, split),
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
pub struct StageCOutput {
    pub coarse: ScoredLabel<CoarseEntityType>,
    pub fine: FinePrediction,
}

pub struct StageCModel {
    strategy: StageCStrategy,
    coarse: EntityCheckpoint,
    fine: EntityCheckpoint,
}

fn objectives(strategy: StageCStrategy) -> (Objective, Objective) {
    let pick = |emb: bool| if emb { Objective::Cosine } else { Objective::CrossEntropy };
    (pick(strategy.coarse_uses_embedding()), pick(strategy.fine_uses_embedding()))
}

impl StageCModel {
    pub fn strategy(&self) -> StageCStrategy {
        self.strategy
    }

    pub fn checkpoints(&self) -> Vec<&Checkpoint> {
        vec![&self.coarse.checkpoint, &self.fine.checkpoint]
    }

    /// Records the training data hash in both manifests.
    pub fn set_dataset_hash(&mut self, hash: &str) {
        for p in [&mut self.coarse, &mut self.fine] {
            p.checkpoint.manifest.dataset_hash = Some(hash.to_string());
        }
    }

    pub fn fine_labels(&self) -> &[String] {
        self.fine.labels()
    }

    pub fn coarse_checkpoint(&self) -> &EntityCheckpoint {
        &self.coarse
    }

    pub fn fine_checkpoint(&self) -> &EntityCheckpoint {
        &self.fine
    }

    pub fn predict_coarse(&self, q: &StageCQuery) -> Result<ScoredLabel<CoarseEntityType>> {
        Ok(self.predict_coarse_batch(std::slice::from_ref(q))?.remove(0))
    }

    pub fn predict_coarse_batch(&self, qs: &[StageCQuery]) -> Result<Vec<ScoredLabel<CoarseEntityType>>> {
        let inputs = qs.iter().map(|q| self.coarse.encode(q, None)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&EncodedInput> = inputs.iter().collect();
        Ok(self.coarse.scores(&refs)?.into_iter().map(ScoredLabel::from_scores).collect())
    }

    /// `coarse` is required exactly when the strategy appends it.
    pub fn predict_fine(&self, q: &StageCQuery, coarse: Option<CoarseEntityType>) -> Result<FinePrediction> {
        Ok(self.predict_fine_batch(std::slice::from_ref(q), &[coarse])?.remove(0))
    }

    pub fn predict_fine_batch(&self, qs: &[StageCQuery], coarse: &[Option<CoarseEntityType>]) -> Result<Vec<FinePrediction>> {
        if !self.fine.with_coarse && coarse.iter().any(Option::is_some) {
            return Err(ModelError::StrategyMismatch(format!(
                "{} does not condition fine types on coarse ones",
                self.strategy
            )));
        }
        let inputs = qs
            .iter()
            .zip(coarse)
            .map(|(q, c)| self.fine.encode(q, *c))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&EncodedInput> = inputs.iter().collect();
        let labels = self.fine.labels();
        Ok(self
            .fine
            .scores(&refs)?
            .into_iter()
            .map(|s| FinePrediction {
                label: FineEntityType::new(&labels[argmax(&s)]),
                scores: s,
            })
            .collect())
    }

    /// Coarse first, then fine (conditioned on the predicted coarse type
    /// or on `coarse_override` under two-step variants).
    pub fn predict_batch(&self, qs: &[StageCQuery], coarse_override: Option<&[CoarseEntityType]>) -> Result<Vec<StageCOutput>> {
        let coarse = self.predict_coarse_batch(qs)?;
        let cond: Vec<Option<CoarseEntityType>> = (0..qs.len())
            .map(|i| {
                self.fine
                    .with_coarse
                    .then(|| coarse_override.map_or(coarse[i].label, |o| o[i]))
            })
            .collect();
        let fine = self.predict_fine_batch(qs, &cond)?;
        Ok(coarse
            .into_iter()
            .zip(fine)
            .map(|(coarse, fine)| StageCOutput { coarse, fine })
            .collect())
    }

    pub fn predict(&self, q: &StageCQuery) -> Result<StageCOutput> {
        Ok(self.predict_batch(std::slice::from_ref(q), None)?.remove(0))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_bundle(dir, StageId::C, self.strategy.as_str(), &self.checkpoints())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (bundle, cks) = load_bundle(dir, StageId::C)?;
        let strategy: StageCStrategy = bundle.strategy.parse().map_err(ModelError::StrategyMismatch)?;
        let mut parts = cks
            .into_iter()
            .map(EntityCheckpoint::from_checkpoint)
            .collect::<Result<Vec<_>>>()?;
        let (co, fo) = objectives(strategy);
        let ok = parts.len() == 2
            && parts[0].level == EntityLevel::Coarse
            && parts[0].objective == co
            && parts[1].level == EntityLevel::Fine
            && parts[1].objective == fo
            && parts[1].with_coarse == strategy.fine_uses_coarse();
        if !ok {
            return Err(ModelError::StrategyMismatch(format!(
                "checkpoints in {} do not match strategy {strategy}",
                dir.display()
            )));
        }
        let fine = parts.pop().expect("two parts");
        let coarse = parts.pop().expect("two parts");
        Ok(StageCModel { strategy, coarse, fine })
    }
}

/// Trains the coarse checkpoint, then the fine one, on entity-typed
/// samples. Fine labels come from the training split.
pub fn train_stage_c(
    train: &[Sample],
    valid: &[Sample],
    strategy: StageCStrategy,
    cfg: &TrainConfig,
) -> Result<(StageCModel, StageTrainReport)> {
    cfg.ensure_constructible()?;
    if strategy.requires_discriminative() && cfg.checkpoint_family.is_generative() {
        return Err(ModelError::StrategyMismatch(format!(
            "{strategy} needs a discriminative encoder, not {}",
            cfg.checkpoint_family
        )));
    }
    if cfg.checkpoint_family.is_generative() {
        return Err(ModelError::FamilyUnavailable(cfg.checkpoint_family.to_string()));
    }
    let typed: Vec<&Sample> = train.iter().filter(|s| s.entity_types().is_some()).collect();
    let typed_valid: Vec<&Sample> = valid.iter().filter(|s| s.entity_types().is_some()).collect();
    if typed.is_empty() {
        return Err(ModelError::EmptyTrainingSet {
            excluded: train.len(),
        });
    }
    let owned: Vec<Sample> = typed.iter().map(|s| (*s).clone()).collect();
    let vocab: FineLabelVocab = build_fine_label_vocab(&owned);
    let fine_labels: Vec<String> = vocab.labels().iter().map(|f| f.as_str().to_string()).collect();
    let coarse_labels: Vec<String> = CoarseEntityType::names().into_iter().map(String::from).collect();
    let (co, fo) = objectives(strategy);

    let mut report = StageTrainReport::new("c", strategy.as_str());
    let mut coarse = EntityCheckpoint::new(
        "coarse",
        strategy,
        EntityLevel::Coarse,
        co,
        false,
        coarse_labels,
        cfg,
        cfg.seed,
    )?;
    coarse.train(&typed, &typed_valid, cfg, &mut report)?;
    let mut fine = EntityCheckpoint::new(
        "fine",
        strategy,
        EntityLevel::Fine,
        fo,
        strategy.fine_uses_coarse(),
        fine_labels,
        cfg,
        cfg.seed.wrapping_add(1),
    )?;
    fine.train(&typed, &typed_valid, cfg, &mut report)?;
    Ok((StageCModel { strategy, coarse, fine }, report))
}

/// Label counts of the fine vocabulary, for logging.
pub fn fine_label_counts(samples: &[Sample]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for s in samples {
        if let Some(f) = &s.fine {
            *m.entry(f.as_str().to_string()).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_examples() {
        let x = [1.0f32, 0.0, 0.0];
        assert!(cosine_embedding_objective(&x, &x, &[], 0.0).unwrap().abs() < 1e-12);
        let y = [0.0f32, 1.0, 0.0];
        assert!((cosine_embedding_objective(&x, &y, &[], 0.0).unwrap() - 1.0).abs() < 1e-12);
        // negative at cosine exactly equal to the margin contributes nothing
        let neg = [0.5f32, (0.75f32).sqrt(), 0.0];
        let c = cosine(&x, &neg);
        assert!((cosine_embedding_objective(&x, &x, &[&neg], c).unwrap()).abs() < 1e-12);
        assert!(cosine_embedding_objective(&x, &[1.0, 0.0], &[], 0.0).is_err());
    }

    #[test]
    fn tensor_objective_matches_scalar() {
        let table_rows = vec![vec![1.0f32, 0.0], vec![0.6, 0.8], vec![0.0, 1.0]];
        let flat: Vec<f32> = table_rows.iter().flatten().copied().collect();
        let table = Tensor::from_vec(flat, (3, 2), &Device::Cpu).unwrap();
        let inputs = vec![vec![2.0f32, 1.0], vec![-1.0, 0.5]];
        let targets = [1usize, 2];
        let flat: Vec<f32> = inputs.iter().flatten().copied().collect();
        let summary = Tensor::from_vec(flat, (2, 2), &Device::Cpu).unwrap();
        for margin in [0.0, 0.3] {
            let t = cosine_objective_tensor(&summary, &table, &targets, margin)
                .unwrap()
                .to_scalar::<f32>()
                .unwrap() as f64;
            let mut expect = 0.0;
            for (x, &g) in inputs.iter().zip(&targets) {
                let negs: Vec<&[f32]> = (0..3).filter(|&c| c != g).map(|c| table_rows[c].as_slice()).collect();
                expect += cosine_embedding_objective(x, &table_rows[g], &negs, margin).unwrap();
            }
            assert!((t - expect / 2.0).abs() < 1e-5, "{t} vs {}", expect / 2.0);
        }
    }

    #[test]
    fn nearest_is_scale_invariant() {
        let t = ClassEmbeddingTable {
            labels: vec!["a".into(), "b".into()],
            vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(t.nearest(&[0.2, 0.9]).0, 1);
        assert_eq!(t.nearest(&[20.0, 90.0]).0, 1);
        assert_eq!(t.nearest(&[1.0, 0.0]).1[0], 1.0);
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let t = ClassEmbeddingTable {
            labels: vec!["brand".into(), "tv show".into()],
            vectors: vec![vec![0.6, 0.8], vec![1.0, 0.0]],
        };
        let p = dir.path().join("t.safetensors");
        t.save(&p).unwrap();
        assert_eq!(ClassEmbeddingTable::load(&p).unwrap(), t);
    }
}
