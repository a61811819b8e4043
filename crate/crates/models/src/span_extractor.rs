//! Stage A: fact triple and inconsistent context span extraction.

use std::path::Path;

use candle_core::{Device, Tensor, D};
use ficle_core::corpus::{CharSpan, FactTriple, Sample};
use ficle_core::encoding::{EncodedInput, InputEncoder, Section, StageAPass, TokenSpan};
use ficle_core::metrics::span_scores;
use ficle_core::strategy::ExtractionStrategy;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{load_bundle, save_bundle, Checkpoint, Manifest, Role, StageId};
use crate::config::TrainConfig;
use crate::error::{ModelError, Result};
use crate::network::{field_logits, Batch, NetworkSpec};
use crate::train::{fit, MetricRecord, StageTrainReport, Validation};

const MASKED: f32 = -1e4;
const INFER_BATCH: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanField {
    Source,
    Relation,
    Target,
    ContextSpan,
}

impl SpanField {
    pub const SRT: [SpanField; 3] = [SpanField::Source, SpanField::Relation, SpanField::Target];

    pub fn as_str(self) -> &'static str {
        match self {
            SpanField::Source => "source",
            SpanField::Relation => "relation",
            SpanField::Target => "target",
            SpanField::ContextSpan => "context_span",
        }
    }

    /// Section the span must come from.
    pub fn section(self) -> Section {
        match self {
            SpanField::ContextSpan => Section::Context,
            _ => Section::Claim,
        }
    }

    /// Only the target may be empty.
    pub fn allows_null(self) -> bool {
        self == SpanField::Target
    }

    pub fn gold(self, s: &Sample) -> &CharSpan {
        match self {
            SpanField::Source => &s.triple.source,
            SpanField::Relation => &s.triple.relation,
            SpanField::Target => &s.triple.target,
            SpanField::ContextSpan => &s.incon_context_span,
        }
    }

    pub fn max_tokens(self, cfg: &TrainConfig) -> usize {
        match self {
            SpanField::ContextSpan => cfg.max_context_span_tokens,
            _ => cfg.max_span_tokens,
        }
    }

    /// Fields each Stage A pass predicts.
    pub fn for_pass(pass: StageAPass) -> Vec<SpanField> {
        match pass {
            StageAPass::TwoStepFirst => Self::SRT.to_vec(),
            StageAPass::MultiTask => vec![Self::Source, Self::Relation, Self::Target, Self::ContextSpan],
            _ => vec![Self::ContextSpan],
        }
    }
}

/// Per-token start and end scores of one field for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanHeadOutput {
    pub field: SpanField,
    pub start_scores: Vec<f32>,
    pub end_scores: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanPrediction {
    pub field: SpanField,
    pub span: CharSpan,
    pub token_span: TokenSpan,
    /// Sum of start and end log-probabilities.
    pub score: f32,
}

impl SpanPrediction {
    /// Joint probability of the chosen start and end.
    pub fn confidence(&self) -> f32 {
        self.score.exp()
    }
}

/// Highest `start[i] + end[j]` over `legal.start <= i <= j <= legal.end`
/// with `j - i + 1 <= max_len`; ties go to smaller `i`, then smaller `j`.
/// For fields that allow it, the null span wins when its own score is
/// strictly higher.
pub fn select_best_span(h: &SpanHeadOutput, legal: TokenSpan, max_len: usize) -> (TokenSpan, f32) {
    let n = h.start_scores.len().min(h.end_scores.len());
    let mut best: Option<(TokenSpan, f32)> = None;
    if legal.start <= legal.end && legal.end < n && max_len > 0 {
        for i in legal.start..=legal.end {
            let last = legal.end.min(i + max_len - 1);
            for j in i..=last {
                let s = h.start_scores[i] + h.end_scores[j];
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((TokenSpan::new(i, j), s));
                }
            }
        }
    }
    if h.field.allows_null() && n > 0 {
        let null = h.start_scores[0] + h.end_scores[0];
        if best.is_none_or(|(_, b)| null > b) {
            return (TokenSpan::NULL, null);
        }
    }
    best.unwrap_or((TokenSpan::NULL, f32::NEG_INFINITY))
}

/// Training example: encoded input plus gold token spans per field.
struct SpanExample {
    input: EncodedInput,
    gold: Vec<TokenSpan>,
}

/// A network trained for one Stage A pass.
pub struct SpanCheckpoint {
    pub checkpoint: Checkpoint,
    pass: StageAPass,
    fields: Vec<SpanField>,
    encoder: InputEncoder,
}

impl SpanCheckpoint {
    fn new(pass: StageAPass, strategy: ExtractionStrategy, name: &str, cfg: &TrainConfig, seed: u64) -> Result<Self> {
        let fields = SpanField::for_pass(pass);
        let spec = NetworkSpec {
            encoder: cfg.encoder,
            span_fields: fields.len(),
            class_heads: vec![],
        };
        let role = Role::Span {
            pass,
            fields: fields.clone(),
        };
        let mut manifest = Manifest::new(name, StageId::A, strategy.as_str(), role, spec, cfg);
        manifest.seed = seed;
        Self::from_checkpoint(Checkpoint::init(manifest)?)
    }

    pub fn from_checkpoint(checkpoint: Checkpoint) -> Result<Self> {
        let Role::Span { pass, fields } = checkpoint.manifest.role.clone() else {
            return Err(ModelError::StrategyMismatch(format!(
                "checkpoint '{}' is not a span extractor",
                checkpoint.manifest.name
            )));
        };
        if fields.len() != checkpoint.manifest.network.span_fields {
            return Err(ModelError::Other("span field count disagrees with the network".into()));
        }
        let encoder = checkpoint.input_encoder()?;
        Ok(SpanCheckpoint {
            checkpoint,
            pass,
            fields,
            encoder,
        })
    }

    pub fn pass(&self) -> StageAPass {
        self.pass
    }

    pub fn fields(&self) -> &[SpanField] {
        &self.fields
    }

    pub fn encode(&self, claim: &str, context: &str, srt: Option<&FactTriple>) -> Result<EncodedInput> {
        Ok(self.encoder.stage_a(claim, context, self.pass, srt)?)
    }

    fn example(&self, s: &Sample) -> Result<SpanExample> {
        let input = self.encode(&s.claim, &s.context, Some(&s.triple))?;
        let gold = self
            .fields
            .iter()
            .map(|f| input.char_span_to_token_span(f.gold(s), f.section()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(SpanExample { input, gold })
    }

    /// Additive mask per field: 0 at legal positions, large negative elsewhere.
    fn legal_bias(&self, inputs: &[&EncodedInput], field: SpanField, width: usize) -> Result<Tensor> {
        let mut v = vec![MASKED; inputs.len() * width];
        for (b, x) in inputs.iter().enumerate() {
            if let Some(sec) = x.section(field.section()) {
                for p in sec.tokens.clone() {
                    v[b * width + p] = 0.0;
                }
            }
            if field.allows_null() {
                v[b * width] = 0.0;
            }
        }
        Ok(Tensor::from_vec(v, (inputs.len(), width), &Device::Cpu)?)
    }

    /// Masked start/end log-probabilities per field, [B, L] each.
    fn scores(&self, inputs: &[&EncodedInput], batch: &Batch) -> Result<Vec<(Tensor, Tensor)>> {
        let out = self.checkpoint.network.forward(batch)?;
        let logits = out.span_logits.expect("span network");
        self.fields
            .iter()
            .enumerate()
            .map(|(k, &f)| {
                let (s, e) = field_logits(&logits, k)?;
                let bias = self.legal_bias(inputs, f, batch.width)?;
                let s = candle_nn::ops::log_softmax(&(s + &bias)?, D::Minus1)?;
                let e = candle_nn::ops::log_softmax(&(e + &bias)?, D::Minus1)?;
                Ok((s, e))
            })
            .collect()
    }

    fn loss(&self, examples: &[&SpanExample]) -> Result<Tensor> {
        let inputs: Vec<&EncodedInput> = examples.iter().map(|e| &e.input).collect();
        let batch = Batch::new(&inputs, &Device::Cpu)?;
        let scores = self.scores(&inputs, &batch)?;
        let mut total: Option<Tensor> = None;
        for (k, (s, e)) in scores.iter().enumerate() {
            let starts: Vec<u32> = examples.iter().map(|x| x.gold[k].start as u32).collect();
            let ends: Vec<u32> = examples.iter().map(|x| x.gold[k].end as u32).collect();
            let starts = Tensor::new(starts.as_slice(), &Device::Cpu)?;
            let ends = Tensor::new(ends.as_slice(), &Device::Cpu)?;
            let l = ((candle_nn::loss::nll(s, &starts)? + candle_nn::loss::nll(e, &ends)?)? * 0.5)?;
            total = Some(match total {
                None => l,
                Some(t) => (t + l)?,
            });
        }
        Ok(total.expect("at least one field"))
    }

    /// Raw head outputs (masked log-probabilities) for each input.
    pub fn head_outputs(&self, inputs: &[&EncodedInput]) -> Result<Vec<Vec<SpanHeadOutput>>> {
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(INFER_BATCH) {
            let batch = Batch::new(chunk, &Device::Cpu)?;
            let scores = self.scores(chunk, &batch)?;
            let rows: Vec<(Vec<Vec<f32>>, Vec<Vec<f32>>)> = scores
                .iter()
                .map(|(s, e)| Ok((s.to_vec2::<f32>()?, e.to_vec2::<f32>()?)))
                .collect::<Result<_>>()?;
            for (b, x) in chunk.iter().enumerate() {
                out.push(
                    self.fields
                        .iter()
                        .zip(&rows)
                        .map(|(&field, (s, e))| SpanHeadOutput {
                            field,
                            start_scores: s[b][..x.len()].to_vec(),
                            end_scores: e[b][..x.len()].to_vec(),
                        })
                        .collect(),
                );
            }
        }
        Ok(out)
    }

    /// Decoded spans per input, one per field in field order.
    pub fn decode(&self, inputs: &[&EncodedInput]) -> Result<Vec<Vec<SpanPrediction>>> {
        let cfg = &self.checkpoint.manifest.train_config;
        let heads = self.head_outputs(inputs)?;
        inputs
            .iter()
            .zip(heads)
            .map(|(x, hs)| {
                hs.into_iter()
                    .map(|h| {
                        let field = h.field;
                        let legal = x.legal_region(field.section()).unwrap_or(TokenSpan::new(1, 0));
                        let (ts, score) = select_best_span(&h, legal, field.max_tokens(cfg));
                        let span = x
                            .token_span_to_char_span(ts, field.section())
                            .ok_or_else(|| ModelError::Other("decoded span outside its section".into()))?;
                        Ok(SpanPrediction {
                            field,
                            span,
                            token_span: ts,
                            score,
                        })
                    })
                    .collect()
            })
            .collect()
    }

    fn validate(&self, samples: &[Sample], epoch: usize, split: &str) -> Result<Validation> {
        let mut inputs = Vec::new();
        let mut kept = Vec::new();
        for s in samples {
            if let Ok(x) = self.encode(&s.claim, &s.context, Some(&s.triple)) {
                inputs.push(x);
                kept.push(s);
            }
        }
        if inputs.is_empty() {
            return Ok(Validation::default());
        }
        let refs: Vec<&EncodedInput> = inputs.iter().collect();
        let preds = self.decode(&refs)?;
        let mut records = Vec::new();
        let mut iou_sum = 0.0;
        for (k, &f) in self.fields.iter().enumerate() {
            let p: Vec<&str> = preds.iter().map(|v| v[k].span.text.as_str()).collect();
            let g: Vec<&str> = kept.iter().map(|s| f.gold(s).text.as_str()).collect();
            let sc = span_scores(&p, &g)?;
            iou_sum += sc.iou;
            records.push(MetricRecord {
                stage: "a".into(),
                checkpoint: self.checkpoint.manifest.name.clone(),
                epoch,
                split: split.into(),
                field: f.as_str().into(),
                em: Some(sc.em),
                iou: Some(sc.iou),
                ..Default::default()
            });
        }
        Ok(Validation {
            selection: iou_sum / self.fields.len() as f64,
            records,
        })
    }

    fn train(&mut self, train: &[Sample], valid: &[Sample], cfg: &TrainConfig, report: &mut StageTrainReport) -> Result<()> {
        let mut examples = Vec::new();
        let mut excluded = 0usize;
        for s in train {
            match self.example(s) {
                Ok(e) => examples.push(e),
                Err(e) => {
                    excluded += 1;
                    log::debug!("excluding sample {}: {e}", s.id);
                }
            }
        }
        if excluded > 0 {
            log::warn!("{excluded} training samples could not be aligned to tokens and were excluded");
        }
        if examples.is_empty() {
            return Err(ModelError::EmptyTrainingSet { excluded });
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
            examples.len(),
            cfg,
            "mean_iou",
            |idx| {
                let batch: Vec<&SpanExample> = idx.iter().map(|&i| &examples[i]).collect();
                this.loss(&batch)
            },
            |epoch| this.validate(valid, epoch, split),
        )?;
        let m = &mut self.checkpoint.manifest;
        m.selection = Some(outcome.selection.clone());
        m.train_examples = examples.len();
        m.excluded_examples = excluded;
        report.push(&m.name.clone(), examples.len(), excluded, outcome);
        Ok(())
    }
}

/// Predicted source, relation and target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrtPrediction {
    pub source: SpanPrediction,
    pub relation: SpanPrediction,
    pub target: SpanPrediction,
}

impl SrtPrediction {
    fn from_vec(v: &[SpanPrediction]) -> Self {
        SrtPrediction {
            source: v[0].clone(),
            relation: v[1].clone(),
            target: v[2].clone(),
        }
    }

    pub fn triple(&self) -> FactTriple {
        FactTriple::new(self.source.span.clone(), self.relation.span.clone(), self.target.span.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageAOutput {
    /// Absent when the strategy does not predict structure.
    pub srt: Option<SrtPrediction>,
    pub context_span: SpanPrediction,
}

/// Input to batched Stage A prediction.
#[derive(Debug, Clone, Copy)]
pub struct StageAQuery<'a> {
    pub claim: &'a str,
    pub context: &'a str,
    /// Fact triple fed to passes that consume structure.
    pub srt: Option<&'a FactTriple>,
}

/// Trained Stage A model: one or two span checkpoints depending on strategy.
pub struct StageAModel {
    strategy: ExtractionStrategy,
    parts: Vec<SpanCheckpoint>,
}

impl StageAModel {
    pub fn strategy(&self) -> ExtractionStrategy {
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

    pub fn num_checkpoints(&self) -> usize {
        self.parts.len()
    }

    fn check_srt(&self, srt: Option<&FactTriple>) -> Result<()> {
        match (self.strategy, srt.is_some()) {
            (ExtractionStrategy::OracleStructure, false) => Err(ModelError::MissingInput(
                "oracle_structure needs the gold fact triple".into(),
            )),
            (ExtractionStrategy::StructureIgnorant | ExtractionStrategy::MultiTask, true) => Err(
                ModelError::StrategyMismatch(format!("{} does not take a fact triple as input", self.strategy)),
            ),
            _ => Ok(()),
        }
    }

    /// Source, relation and target for strategies that predict them.
    pub fn predict_srt(&self, claim: &str, context: &str) -> Result<SrtPrediction> {
        if !self.strategy.predicts_structure() {
            return Err(ModelError::StrategyMismatch(format!(
                "{} does not predict source/relation/target",
                self.strategy
            )));
        }
        let part = &self.parts[0];
        let x = part.encode(claim, context, None)?;
        let v = part.decode(&[&x])?.remove(0);
        Ok(SrtPrediction::from_vec(&v))
    }

    pub fn predict_context_span(&self, claim: &str, context: &str, srt: Option<&FactTriple>) -> Result<SpanPrediction> {
        Ok(self
            .predict_batch(&[StageAQuery { claim, context, srt }])?
            .remove(0)
            .context_span)
    }

    pub fn predict(&self, claim: &str, context: &str, srt: Option<&FactTriple>) -> Result<StageAOutput> {
        Ok(self.predict_batch(&[StageAQuery { claim, context, srt }])?.remove(0))
    }

    pub fn predict_batch(&self, queries: &[StageAQuery]) -> Result<Vec<StageAOutput>> {
        for q in queries {
            self.check_srt(q.srt)?;
        }
        let first = &self.parts[0];
        let inputs = queries
            .iter()
            .map(|q| first.encode(q.claim, q.context, q.srt))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&EncodedInput> = inputs.iter().collect();
        let decoded = first.decode(&refs)?;
        match self.strategy {
            ExtractionStrategy::StructureIgnorant | ExtractionStrategy::OracleStructure => Ok(decoded
                .into_iter()
                .map(|mut v| StageAOutput {
                    srt: None,
                    context_span: v.remove(0),
                })
                .collect()),
            ExtractionStrategy::MultiTask => Ok(decoded
                .into_iter()
                .map(|v| StageAOutput {
                    srt: Some(SrtPrediction::from_vec(&v[..3])),
                    context_span: v[3].clone(),
                })
                .collect()),
            ExtractionStrategy::TwoStep => {
                let srts: Vec<SrtPrediction> = decoded.iter().map(|v| SrtPrediction::from_vec(v)).collect();
                let triples: Vec<FactTriple> = srts.iter().map(SrtPrediction::triple).collect();
                let second = &self.parts[1];
                let inputs = queries
                    .iter()
                    .zip(&triples)
                    .map(|(q, t)| second.encode(q.claim, q.context, Some(q.srt.unwrap_or(t))))
                    .collect::<Result<Vec<_>>>()?;
                let refs: Vec<&EncodedInput> = inputs.iter().collect();
                let spans = second.decode(&refs)?;
                Ok(srts
                    .into_iter()
                    .zip(spans)
                    .map(|(s, mut c)| StageAOutput {
                        srt: Some(s),
                        context_span: c.remove(0),
                    })
                    .collect())
            }
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_bundle(dir, StageId::A, self.strategy.as_str(), &self.checkpoints())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (bundle, cks) = load_bundle(dir, StageId::A)?;
        let strategy: ExtractionStrategy = bundle.strategy.parse().map_err(ModelError::StrategyMismatch)?;
        let parts = cks
            .into_iter()
            .map(SpanCheckpoint::from_checkpoint)
            .collect::<Result<Vec<_>>>()?;
        let passes: Vec<StageAPass> = parts.iter().map(|p| p.pass).collect();
        if passes != StageAPass::for_strategy(strategy) {
            return Err(ModelError::StrategyMismatch(format!(
                "checkpoints {passes:?} do not match strategy {strategy}"
            )));
        }
        Ok(StageAModel { strategy, parts })
    }
}

fn pass_name(pass: StageAPass) -> &'static str {
    match pass {
        StageAPass::TwoStepFirst => "srt",
        StageAPass::MultiTask => "joint",
        _ => "context_span",
    }
}

/// Trains every checkpoint the strategy needs, in order. The two-step
/// second pass is trained on gold triples.
pub fn train_stage_a(
    train: &[Sample],
    valid: &[Sample],
    strategy: ExtractionStrategy,
    cfg: &TrainConfig,
) -> Result<(StageAModel, StageTrainReport)> {
    cfg.ensure_constructible()?;
    if cfg.checkpoint_family.is_generative() {
        return Err(ModelError::FamilyUnavailable(cfg.checkpoint_family.to_string()));
    }
    if train.is_empty() {
        return Err(ModelError::EmptyTrainingSet { excluded: 0 });
    }
    let mut report = StageTrainReport::new("a", strategy.as_str());
    let mut parts = Vec::new();
    for (i, &pass) in StageAPass::for_strategy(strategy).iter().enumerate() {
        let mut part = SpanCheckpoint::new(pass, strategy, pass_name(pass), cfg, cfg.seed.wrapping_add(i as u64))?;
        part.train(train, valid, cfg, &mut report)?;
        parts.push(part);
    }
    Ok((StageAModel { strategy, parts }, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head(field: SpanField, s: &[f32], e: &[f32]) -> SpanHeadOutput {
        SpanHeadOutput {
            field,
            start_scores: s.to_vec(),
            end_scores: e.to_vec(),
        }
    }

    #[test]
    fn single_token_region() {
        let h = head(SpanField::Source, &[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(select_best_span(&h, TokenSpan::new(2, 2), 5).0, TokenSpan::new(2, 2));
    }

    #[test]
    fn start_after_end_peak_is_not_chosen() {
        // start peaks at 3, end peaks at 1: the invalid pair (3, 1) is skipped
        let h = head(SpanField::ContextSpan, &[0.0, 0.0, 0.0, 5.0], &[0.0, 5.0, 0.0, 1.0]);
        let (ts, s) = select_best_span(&h, TokenSpan::new(1, 3), 10);
        assert_eq!(ts, TokenSpan::new(3, 3));
        assert_eq!(s, 6.0);
    }

    #[test]
    fn uniform_scores_pick_leftmost_minimal() {
        let h = head(SpanField::Relation, &[1.0; 6], &[1.0; 6]);
        assert_eq!(select_best_span(&h, TokenSpan::new(2, 5), 3).0, TokenSpan::new(2, 2));
    }

    #[test]
    fn max_len_is_enforced() {
        let h = head(SpanField::ContextSpan, &[0.0, 9.0, 0.0, 0.0, 0.0], &[0.0, 0.0, 0.0, 0.0, 9.0]);
        let (ts, _) = select_best_span(&h, TokenSpan::new(1, 4), 2);
        assert!(ts.len() <= 2);
    }

    #[test]
    fn null_only_for_target_and_only_when_strictly_better() {
        let s = [5.0, 1.0, 0.0];
        let e = [5.0, 1.0, 0.0];
        assert_eq!(select_best_span(&head(SpanField::Target, &s, &e), TokenSpan::new(1, 2), 5).0, TokenSpan::NULL);
        assert_eq!(
            select_best_span(&head(SpanField::Source, &s, &e), TokenSpan::new(1, 2), 5).0,
            TokenSpan::new(1, 1)
        );
        let tie = [1.0, 1.0];
        assert_eq!(
            select_best_span(&head(SpanField::Target, &tie, &tie), TokenSpan::new(1, 1), 5).0,
            TokenSpan::new(1, 1)
        );
    }
}
