//! End-to-end explanation: spans, then type and component, then entity
//! types.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ficle_core::corpus::{CharSpan, ClaimComponent, CoarseEntityType, FactTriple, FineEntityType, InconsistencyType, Label, Sample};
use ficle_core::metrics::{
    classification_report, coverage_by_length, length_by_correctness, span_error_histogram, span_scores, BucketCoverage,
    ClassificationReport, ConfusionMatrix, ErrorHistogram, LengthBucket, LengthByCorrectness,
};
use ficle_core::strategy::{ExtractionStrategy, StageBStrategy, StageCStrategy};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, EntityLevel, Role};
use crate::classifier::{argmax, StageBModel, StageBQuery};
use crate::entity_typer::{StageCModel, StageCQuery};
use crate::error::{ModelError, Result};
use crate::span_extractor::{StageAModel, StageAQuery};

const EVAL_CHUNK: usize = 64;

/// Scores under these are flagged as low confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Probability of the decoded start/end pair.
    pub span: f32,
    /// Top class probability (or cosine for embedding heads).
    pub classification: f32,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            span: 0.25,
            classification: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRef<S> {
    pub strategy: S,
    pub checkpoint: PathBuf,
}

/// Which trained bundle serves each step. Coarse and fine types may come
/// from bundles trained under different strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stage_a: StageRef<ExtractionStrategy>,
    pub stage_b: StageRef<StageBStrategy>,
    pub coarse: StageRef<StageCStrategy>,
    pub fine: StageRef<StageCStrategy>,
    pub thresholds: Thresholds,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            stage_a: StageRef {
                strategy: ExtractionStrategy::MultiTask,
                checkpoint: "stage_a/multi_task".into(),
            },
            stage_b: StageRef {
                strategy: StageBStrategy::MultiTask,
                checkpoint: "stage_b/multi_task".into(),
            },
            coarse: StageRef {
                strategy: StageCStrategy::IndividualEmbedding,
                checkpoint: "stage_c/individual_embedding".into(),
            },
            fine: StageRef {
                strategy: StageCStrategy::TwoStepMix,
                checkpoint: "stage_c/two_step_mix".into(),
            },
            thresholds: Thresholds::default(),
        }
    }
}

impl PipelineConfig {
    /// Resolves relative checkpoint paths against `root`.
    pub fn resolve(mut self, root: &Path) -> Self {
        for p in [
            &mut self.stage_a.checkpoint,
            &mut self.stage_b.checkpoint,
            &mut self.coarse.checkpoint,
            &mut self.fine.checkpoint,
        ] {
            if p.is_relative() {
                *p = root.join(&*p);
            }
        }
        self
    }
}

/// One pipeline input. `triple` is consulted only by Stage A strategies
/// that take the gold structure as input.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub id: Option<&'a str>,
    pub claim: &'a str,
    pub context: &'a str,
    pub triple: Option<&'a FactTriple>,
}

impl<'a> Query<'a> {
    pub fn from_sample(s: &'a Sample) -> Self {
        Query {
            id: Some(&s.id),
            claim: &s.claim,
            context: &s.context,
            triple: Some(&s.triple),
        }
    }
}

/// Per-field scores; `None` where the step did not run a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageScores {
    pub source: Option<f32>,
    pub relation: Option<f32>,
    pub target: Option<f32>,
    pub context_span: Option<f32>,
    pub component: Option<f32>,
    pub itype: Option<f32>,
    pub coarse: Option<f32>,
    pub fine: Option<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageAResult {
    pub triple: FactTriple,
    pub context_span: CharSpan,
    pub scores: StageScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageBResult {
    pub component: ClaimComponent,
    pub itype: InconsistencyType,
    pub scores: StageScores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCResult {
    pub coarse: CoarseEntityType,
    pub fine: FineEntityType,
    pub scores: StageScores,
}

pub trait StageAPredictor {
    fn stage_a(&self, queries: &[Query]) -> Result<Vec<StageAResult>>;
}

pub trait StageBPredictor {
    fn stage_b(&self, queries: &[Query], triples: &[&FactTriple], spans: &[&CharSpan]) -> Result<Vec<StageBResult>>;
}

/// `None` marks an input the predictor considers entity-free.
pub trait StageCPredictor {
    fn stage_c(
        &self,
        queries: &[Query],
        context_spans: &[&CharSpan],
        claim_spans: &[&CharSpan],
        coarse_override: Option<&[CoarseEntityType]>,
    ) -> Result<Vec<Option<StageCResult>>>;
}

impl StageAPredictor for StageAModel {
    fn stage_a(&self, queries: &[Query]) -> Result<Vec<StageAResult>> {
        let oracle = self.strategy() == ExtractionStrategy::OracleStructure;
        let qs: Vec<StageAQuery> = queries
            .iter()
            .map(|q| StageAQuery {
                claim: q.claim,
                context: q.context,
                srt: if oracle { q.triple } else { None },
            })
            .collect();
        let out = self.predict_batch(&qs)?;
        Ok(out
            .into_iter()
            .zip(queries)
            .map(|(o, q)| {
                let mut scores = StageScores {
                    context_span: Some(o.context_span.confidence()),
                    ..Default::default()
                };
                let triple = match (&o.srt, oracle) {
                    (Some(srt), _) => {
                        scores.source = Some(srt.source.confidence());
                        scores.relation = Some(srt.relation.confidence());
                        scores.target = Some(srt.target.confidence());
                        srt.triple()
                    }
                    (None, true) => q.triple.cloned().expect("checked by predict_batch"),
                    (None, false) => FactTriple::new(CharSpan::empty(), CharSpan::empty(), CharSpan::empty()),
                };
                StageAResult {
                    triple,
                    context_span: o.context_span.span,
                    scores,
                }
            })
            .collect())
    }
}

impl StageBPredictor for StageBModel {
    fn stage_b(&self, queries: &[Query], triples: &[&FactTriple], spans: &[&CharSpan]) -> Result<Vec<StageBResult>> {
        let qs: Vec<StageBQuery> = queries
            .iter()
            .zip(triples.iter().zip(spans))
            .map(|(q, (t, c))| StageBQuery {
                claim: q.claim,
                context: q.context,
                srt: t,
                context_span: c,
            })
            .collect();
        Ok(self
            .predict_batch(&qs)?
            .into_iter()
            .map(|o| StageBResult {
                component: o.component.label,
                itype: o.itype.label,
                scores: StageScores {
                    component: Some(o.component.confidence()),
                    itype: Some(o.itype.confidence()),
                    ..Default::default()
                },
            })
            .collect())
    }
}

/// Coarse types from one Stage C bundle, fine types from another (or the
/// same one).
pub struct EntityStages {
    pub coarse: StageCModel,
    pub fine: StageCModel,
}

impl StageCPredictor for EntityStages {
    fn stage_c(
        &self,
        queries: &[Query],
        context_spans: &[&CharSpan],
        claim_spans: &[&CharSpan],
        coarse_override: Option<&[CoarseEntityType]>,
    ) -> Result<Vec<Option<StageCResult>>> {
        let _ = queries;
        let qs: Vec<StageCQuery> = context_spans
            .iter()
            .zip(claim_spans)
            .map(|(c, s)| StageCQuery {
                context_span: c,
                claim_span: s,
            })
            .collect();
        let coarse = self.coarse.predict_coarse_batch(&qs)?;
        let with_coarse = self.fine.strategy().fine_uses_coarse();
        let cond: Vec<Option<CoarseEntityType>> = (0..qs.len())
            .map(|i| with_coarse.then(|| coarse_override.map_or(coarse[i].label, |o| o[i])))
            .collect();
        let fine = self.fine.predict_fine_batch(&qs, &cond)?;
        Ok(coarse
            .into_iter()
            .zip(fine)
            .map(|(c, f)| {
                Some(StageCResult {
                    coarse: c.label,
                    fine: f.label.clone(),
                    scores: StageScores {
                        coarse: Some(c.confidence()),
                        fine: Some(f.scores[argmax(&f.scores)]),
                        ..Default::default()
                    },
                })
            })
            .collect())
    }
}


/// Gold annotations served in place of any stage, looked up by sample id.
pub struct GoldStages {
    by_id: HashMap<String, Sample>,
}

impl GoldStages {
    pub fn new(samples: &[Sample]) -> Self {
        GoldStages {
            by_id: samples.iter().map(|s| (s.id.clone(), s.clone())).collect(),
        }
    }

    fn get(&self, q: &Query) -> Result<&Sample> {
        let id = q.id.ok_or_else(|| ModelError::MissingInput("gold stages need sample ids".into()))?;
        self.by_id
            .get(id)
            .ok_or_else(|| ModelError::MissingInput(format!("no gold annotation for sample '{id}'")))
    }
}

impl StageAPredictor for GoldStages {
    fn stage_a(&self, queries: &[Query]) -> Result<Vec<StageAResult>> {
        queries
            .iter()
            .map(|q| {
                let s = self.get(q)?;
                Ok(StageAResult {
                    triple: s.triple.clone(),
                    context_span: s.incon_context_span.clone(),
                    scores: StageScores::default(),
                })
            })
            .collect()
    }
}

impl StageBPredictor for GoldStages {
    fn stage_b(&self, queries: &[Query], _: &[&FactTriple], _: &[&CharSpan]) -> Result<Vec<StageBResult>> {
        queries
            .iter()
            .map(|q| {
                let s = self.get(q)?;
                Ok(StageBResult {
                    component: s.component,
                    itype: s.itype,
                    scores: StageScores::default(),
                })
            })
            .collect()
    }
}

impl StageCPredictor for GoldStages {
    fn stage_c(
        &self,
        queries: &[Query],
        _: &[&CharSpan],
        _: &[&CharSpan],
        _: Option<&[CoarseEntityType]>,
    ) -> Result<Vec<Option<StageCResult>>> {
        queries
            .iter()
            .map(|q| {
                let s = self.get(q)?;
                Ok(s.entity_types().map(|(coarse, fine)| StageCResult {
                    coarse,
                    fine: fine.clone(),
                    scores: StageScores::default(),
                }))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// Fields whose score fell under the threshold.
    pub low_confidence: Vec<String>,
    /// Gold annotation marks the sample entity-free; entity types are
    /// still reported.
    pub not_entity_typed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub triple: FactTriple,
    pub incon_context_span: CharSpan,
    pub component: ClaimComponent,
    /// Claim-side span named by the component.
    pub component_span: CharSpan,
    pub itype: InconsistencyType,
    pub coarse: Option<CoarseEntityType>,
    pub fine: Option<FineEntityType>,
    pub scores: StageScores,
    pub flags: Flags,
}

impl Explanation {
    /// Component span lies in the triple and entity types are paired.
    pub fn check_invariants(&self) -> Result<()> {
        if self.triple.component_span(self.component) != &self.component_span {
            return Err(ModelError::Other("component span is not part of the triple".into()));
        }
        if self.coarse.is_some() != self.fine.is_some() {
            return Err(ModelError::Other("coarse and fine types must come together".into()));
        }
        Ok(())
    }
}

fn low_confidence(scores: &StageScores, t: &Thresholds) -> Vec<String> {
    let span = [
        ("source", scores.source),
        ("relation", scores.relation),
        ("target", scores.target),
        ("context_span", scores.context_span),
    ];
    let class = [
        ("component", scores.component),
        ("itype", scores.itype),
        ("coarse", scores.coarse),
        ("fine", scores.fine),
    ];
    let mut out = Vec::new();
    for (name, s) in span {
        if s.is_some_and(|s| s < t.span) {
            out.push(name.to_string());
        }
    }
    for (name, s) in class {
        if s.is_some_and(|s| s < t.classification) {
            out.push(name.to_string());
        }
    }
    out
}

fn merge(a: &StageScores, b: &StageScores, c: Option<&StageScores>) -> StageScores {
    StageScores {
        source: a.source,
        relation: a.relation,
        target: a.target,
        context_span: a.context_span,
        component: b.component,
        itype: b.itype,
        coarse: c.and_then(|c| c.coarse),
        fine: c.and_then(|c| c.fine),
    }
}

/// Runs the three stages in order over a batch.
pub fn explain_batch(
    a: &dyn StageAPredictor,
    b: &dyn StageBPredictor,
    c: &dyn StageCPredictor,
    queries: &[Query],
    thresholds: &Thresholds,
) -> Result<Vec<Explanation>> {
    let ares = a.stage_a(queries).map_err(|e| e.in_stage("a"))?;
    let triples: Vec<&FactTriple> = ares.iter().map(|r| &r.triple).collect();
    let spans: Vec<&CharSpan> = ares.iter().map(|r| &r.context_span).collect();
    let bres = b.stage_b(queries, &triples, &spans).map_err(|e| e.in_stage("b"))?;

    // Fill the component sub-span with the full slot span when Stage A
    // produced none at that granularity.
    let mut full: Vec<FactTriple> = Vec::with_capacity(queries.len());
    for (r, br) in ares.iter().zip(&bres) {
        let mut t = r.triple.clone();
        if t.sub_span(br.component).is_none() {
            let slot = t.slot(br.component.slot()).clone();
            *t.sub_span_mut(br.component) = Some(slot);
        }
        full.push(t);
    }
    let claim_spans: Vec<&CharSpan> = full.iter().zip(&bres).map(|(t, br)| t.component_span(br.component)).collect();
    let cres = c.stage_c(queries, &spans, &claim_spans, None).map_err(|e| e.in_stage("c"))?;

    let mut out = Vec::with_capacity(queries.len());
    for ((((q, ar), br), cr), triple) in queries.iter().zip(ares).zip(bres).zip(cres).zip(full) {
        let scores = merge(&ar.scores, &br.scores, cr.as_ref().map(|c| &c.scores));
        let e = Explanation {
            id: q.id.map(String::from),
            component_span: triple.component_span(br.component).clone(),
            triple,
            incon_context_span: ar.context_span,
            component: br.component,
            itype: br.itype,
            coarse: cr.as_ref().map(|c| c.coarse),
            fine: cr.map(|c| c.fine),
            flags: Flags {
                low_confidence: low_confidence(&scores, thresholds),
                not_entity_typed: false,
            },
            scores,
        };
        e.check_invariants()?;
        out.push(e);
    }
    Ok(out)
}

/// Loaded models of every stage.
pub struct Pipeline {
    pub stage_a: StageAModel,
    pub stage_b: StageBModel,
    pub stage_c: EntityStages,
    pub thresholds: Thresholds,
}

fn all_checkpoints(p: &Pipeline) -> Vec<&Checkpoint> {
    let mut v = p.stage_a.checkpoints();
    v.extend(p.stage_b.checkpoints());
    v.extend(p.stage_c.coarse.checkpoints());
    v.extend(p.stage_c.fine.checkpoints());
    v
}

impl Pipeline {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let stage_a = StageAModel::load(&cfg.stage_a.checkpoint).map_err(|e| e.in_stage("a"))?;
        let stage_b = StageBModel::load(&cfg.stage_b.checkpoint).map_err(|e| e.in_stage("b"))?;
        let coarse = StageCModel::load(&cfg.coarse.checkpoint).map_err(|e| e.in_stage("c"))?;
        let fine = StageCModel::load(&cfg.fine.checkpoint).map_err(|e| e.in_stage("c"))?;
        let check = |stage: &'static str, want: String, got: String| {
            if want == got {
                Ok(())
            } else {
                Err(ModelError::StrategyMismatch(format!("configured {want}, checkpoint holds {got}")).in_stage(stage))
            }
        };
        check("a", cfg.stage_a.strategy.to_string(), stage_a.strategy().to_string())?;
        check("b", cfg.stage_b.strategy.to_string(), stage_b.strategy().to_string())?;
        check("c", cfg.coarse.strategy.to_string(), coarse.strategy().to_string())?;
        check("c", cfg.fine.strategy.to_string(), fine.strategy().to_string())?;
        let p = Pipeline {
            stage_a,
            stage_b,
            stage_c: EntityStages { coarse, fine },
            thresholds: cfg.thresholds,
        };
        p.check_consistency()?;
        Ok(p)
    }

    /// Every checkpoint shares the marker scheme; coarse label orders agree.
    pub fn check_consistency(&self) -> Result<()> {
        let cks = all_checkpoints(self);
        let scheme = &cks[0].manifest.scheme;
        for c in &cks {
            if &c.manifest.scheme != scheme {
                return Err(ModelError::InvalidConfig(format!(
                    "checkpoint '{}' uses a different marker scheme",
                    c.manifest.name
                )));
            }
            if let Role::Entity {
                level: EntityLevel::Coarse,
                ..
            } = c.manifest.role
            {
                if c.manifest.labels[0] != CoarseEntityType::names() {
                    return Err(ModelError::InvalidConfig("coarse label orders disagree".into()));
                }
            }
        }
        Ok(())
    }

    pub fn run(&self, claim: &str, context: &str) -> Result<Explanation> {
        let q = Query {
            id: None,
            claim,
            context,
            triple: None,
        };
        Ok(self.run_batch(&[q])?.remove(0))
    }

    pub fn run_batch(&self, queries: &[Query]) -> Result<Vec<Explanation>> {
        explain_batch(&self.stage_a, &self.stage_b, &self.stage_c, queries, &self.thresholds)
    }

    pub fn evaluate(&self, samples: &[Sample]) -> Result<Evaluation> {
        evaluate_with(
            &self.stage_a,
            &self.stage_b,
            &self.stage_c,
            self.stage_c.fine.fine_labels(),
            samples,
            &self.thresholds,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanFieldReport {
    pub field: String,
    pub n: usize,
    pub em: f64,
    pub iou: f64,
}

/// Stage B and C reports under one input mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownstreamReports {
    pub itype: ClassificationReport,
    pub component: ClassificationReport,
    /// Over samples with gold entity types; absent when there are none.
    pub coarse: Option<ClassificationReport>,
    pub fine: Option<ClassificationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBundle {
    pub samples: usize,
    pub entity_typed_samples: usize,
    pub spans: Vec<SpanFieldReport>,
    pub pipeline_input: DownstreamReports,
    pub gold_input: DownstreamReports,
    /// Type confusion under pipeline input.
    pub type_confusion: ConfusionMatrix,
    pub context_span_errors: ErrorHistogram,
    pub coverage_by_length: Vec<BucketCoverage>,
    pub length_by_correctness: LengthByCorrectness,
    /// Places where gold inputs scored lower than predicted ones.
    pub oracle_dominance_warnings: Vec<String>,
}

impl EvaluationBundle {
    pub fn span(&self, field: &str) -> Option<&SpanFieldReport> {
        self.spans.iter().find(|s| s.field == field)
    }
}

pub struct Evaluation {
    pub bundle: EvaluationBundle,
    pub explanations: Vec<Explanation>,
}

fn entity_reports(
    preds: &[Option<StageCResult>],
    samples: &[Sample],
    fine_labels: &[String],
) -> Result<(Option<ClassificationReport>, Option<ClassificationReport>)> {
    let mut pc = Vec::new();
    let mut gc = Vec::new();
    let mut pf = Vec::new();
    let mut gf = Vec::new();
    for (p, s) in preds.iter().zip(samples) {
        if let (Some(p), Some((c, f))) = (p, s.entity_types()) {
            pc.push(p.coarse);
            gc.push(c);
            pf.push(p.fine.as_str().to_string());
            gf.push(f.as_str().to_string());
        }
    }
    if gc.is_empty() {
        return Ok((None, None));
    }
    let mut labels: Vec<String> = fine_labels.to_vec();
    for l in gf.iter().chain(&pf) {
        if !labels.contains(l) {
            labels.push(l.clone());
        }
    }
    let coarse = classification_report(&pc, &gc, CoarseEntityType::ALL)?;
    let fine = classification_report(&pf, &gf, &labels)?;
    Ok((Some(coarse), Some(fine)))
}

fn downstream(
    b: &[StageBResult],
    c: &[Option<StageCResult>],
    samples: &[Sample],
    fine_labels: &[String],
) -> Result<DownstreamReports> {
    let pt: Vec<InconsistencyType> = b.iter().map(|r| r.itype).collect();
    let gt: Vec<InconsistencyType> = samples.iter().map(|s| s.itype).collect();
    let pcomp: Vec<ClaimComponent> = b.iter().map(|r| r.component).collect();
    let gcomp: Vec<ClaimComponent> = samples.iter().map(|s| s.component).collect();
    let (coarse, fine) = entity_reports(c, samples, fine_labels)?;
    Ok(DownstreamReports {
        itype: classification_report(&pt, &gt, InconsistencyType::ALL)?,
        component: classification_report(&pcomp, &gcomp, ClaimComponent::ALL)?,
        coarse,
        fine,
    })
}

fn dominance(pipe: &DownstreamReports, gold: &DownstreamReports) -> Vec<String> {
    let pairs = [
        ("itype", Some(&pipe.itype), Some(&gold.itype)),
        ("component", Some(&pipe.component), Some(&gold.component)),
        ("coarse", pipe.coarse.as_ref(), gold.coarse.as_ref()),
        ("fine", pipe.fine.as_ref(), gold.fine.as_ref()),
    ];
    let mut out = Vec::new();
    for (name, p, g) in pairs {
        if let (Some(p), Some(g)) = (p, g) {
            if g.weighted_f1 + 1e-12 < p.weighted_f1 {
                let msg = format!(
                    "{name}: gold-input weighted F1 {:.4} is below pipeline-input {:.4}",
                    g.weighted_f1, p.weighted_f1
                );
                log::warn!("{msg}");
                out.push(msg);
            }
        }
    }
    out
}

/// Runs the pipeline over `samples` and scores every field, plus Stage B
/// and C again on gold inputs.
pub fn evaluate_with(
    a: &dyn StageAPredictor,
    b: &dyn StageBPredictor,
    c: &dyn StageCPredictor,
    fine_labels: &[String],
    samples: &[Sample],
    thresholds: &Thresholds,
) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(ModelError::MissingInput("no samples to evaluate".into()));
    }
    let mut explanations = Vec::with_capacity(samples.len());
    let mut gold_b = Vec::with_capacity(samples.len());
    let mut gold_c = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        let qs: Vec<Query> = chunk.iter().map(Query::from_sample).collect();
        let mut ex = explain_batch(a, b, c, &qs, thresholds)?;
        for (e, s) in ex.iter_mut().zip(chunk) {
            e.flags.not_entity_typed = s.entity_types().is_none();
        }
        explanations.extend(ex);

        let triples: Vec<&FactTriple> = chunk.iter().map(|s| &s.triple).collect();
        let spans: Vec<&CharSpan> = chunk.iter().map(|s| &s.incon_context_span).collect();
        gold_b.extend(b.stage_b(&qs, &triples, &spans).map_err(|e| e.in_stage("b"))?);
        let claim_spans: Vec<&CharSpan> = chunk.iter().map(Sample::claim_component_span).collect();
        // Samples without gold coarse types get an arbitrary conditioning
        // value; they are excluded from entity scores anyway.
        let coarse: Vec<CoarseEntityType> = chunk
            .iter()
            .map(|s| s.coarse.unwrap_or(CoarseEntityType::Others))
            .collect();
        gold_c.extend(
            c.stage_c(&qs, &spans, &claim_spans, Some(&coarse))
                .map_err(|e| e.in_stage("c"))?,
        );
    }

    let mut spans = Vec::new();
    let fields: [(&str, fn(&FactTriple) -> &CharSpan); 3] =
        [("source", |t| &t.source), ("relation", |t| &t.relation), ("target", |t| &t.target)];
    for (name, get) in fields {
        let p: Vec<&str> = explanations.iter().map(|e| get(&e.triple).text.as_str()).collect();
        let g: Vec<&str> = samples.iter().map(|s| get(&s.triple).text.as_str()).collect();
        let sc = span_scores(&p, &g)?;
        spans.push(SpanFieldReport {
            field: name.into(),
            n: sc.n,
            em: sc.em,
            iou: sc.iou,
        });
    }
    let pc: Vec<&str> = explanations.iter().map(|e| e.incon_context_span.text.as_str()).collect();
    let gc: Vec<&str> = samples.iter().map(|s| s.incon_context_span.text.as_str()).collect();
    let sc = span_scores(&pc, &gc)?;
    spans.push(SpanFieldReport {
        field: "context_span".into(),
        n: sc.n,
        em: sc.em,
        iou: sc.iou,
    });

    let pipe_b: Vec<StageBResult> = explanations
        .iter()
        .map(|e| StageBResult {
            component: e.component,
            itype: e.itype,
            scores: StageScores::default(),
        })
        .collect();
    let pipe_c: Vec<Option<StageCResult>> = explanations
        .iter()
        .map(|e| match (e.coarse, &e.fine) {
            (Some(coarse), Some(fine)) => Some(StageCResult {
                coarse,
                fine: fine.clone(),
                scores: StageScores::default(),
            }),
            _ => None,
        })
        .collect();
    let pipeline_input = downstream(&pipe_b, &pipe_c, samples, fine_labels)?;
    let gold_input = downstream(&gold_b, &gold_c, samples, fine_labels)?;
    let oracle_dominance_warnings = dominance(&pipeline_input, &gold_input);

    let bundle = EvaluationBundle {
        samples: samples.len(),
        entity_typed_samples: samples.iter().filter(|s| s.entity_types().is_some()).count(),
        spans,
        type_confusion: pipeline_input.itype.confusion.clone(),
        pipeline_input,
        gold_input,
        context_span_errors: span_error_histogram(&pc, &gc)?,
        coverage_by_length: coverage_by_length(&pc, &gc, &LengthBucket::default_buckets())?,
        length_by_correctness: length_by_correctness(&pc, &gc)?,
        oracle_dominance_warnings,
    };
    Ok(Evaluation { bundle, explanations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_flag_only_scored_fields() {
        let s = StageScores {
            source: Some(0.1),
            context_span: Some(0.9),
            itype: Some(0.4),
            ..Default::default()
        };
        assert_eq!(low_confidence(&s, &Thresholds::default()), vec!["source", "itype"]);
    }

    #[test]
    fn default_config_round_trips() {
        let c = PipelineConfig::default();
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<PipelineConfig>(&j).unwrap(), c);
        let r = c.resolve(Path::new("/runs"));
        assert!(r.stage_a.checkpoint.starts_with("/runs"));
    }
}
