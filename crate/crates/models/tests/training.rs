use ficle_core::corpus::synthetic::generate;
use ficle_core::corpus::Sample;
use ficle_core::metrics::span_scores;
use ficle_core::strategy::{ExtractionStrategy, StageBStrategy, StageCStrategy};
use ficle_models::classifier::{train_stage_b, StageBModel, StageBQuery};
use ficle_models::entity_typer::{train_stage_c, StageCModel, StageCQuery};
use ficle_models::span_extractor::{train_stage_a, StageAModel, StageAQuery};
use ficle_models::TrainConfig;

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        learning_rate: Some(2e-3),
        weight_decay: 0.0,
        ..Default::default()
    }
}

fn context_iou(m: &StageAModel, samples: &[Sample]) -> f64 {
    let qs: Vec<StageAQuery> = samples
        .iter()
        .map(|s| StageAQuery {
            claim: &s.claim,
            context: &s.context,
            srt: None,
        })
        .collect();
    let out = m.predict_batch(&qs).unwrap();
    let p: Vec<&str> = out.iter().map(|o| o.context_span.span.text.as_str()).collect();
    let g: Vec<&str> = samples.iter().map(|s| s.incon_context_span.text.as_str()).collect();
    span_scores(&p, &g).unwrap().iou
}

fn stage_b_accuracy(m: &StageBModel, samples: &[Sample]) -> (f64, f64) {
    let qs: Vec<StageBQuery> = samples.iter().map(StageBQuery::gold).collect();
    let out = m.predict_batch(&qs).unwrap();
    let n = samples.len() as f64;
    let t = out.iter().zip(samples).filter(|(o, s)| o.itype.label == s.itype).count() as f64 / n;
    let c = out.iter().zip(samples).filter(|(o, s)| o.component.label == s.component).count() as f64 / n;
    (t, c)
}

fn stage_c_accuracy(m: &StageCModel, samples: &[Sample]) -> (f64, f64) {
    let typed: Vec<&Sample> = samples.iter().filter(|s| s.entity_types().is_some()).collect();
    let qs: Vec<StageCQuery> = typed
        .iter()
        .map(|s| StageCQuery {
            context_span: &s.incon_context_span,
            claim_span: s.claim_component_span(),
        })
        .collect();
    let out = m.predict_batch(&qs, None).unwrap();
    let n = typed.len() as f64;
    let c = out.iter().zip(&typed).filter(|(o, s)| Some(o.coarse.label) == s.coarse).count() as f64 / n;
    let f = out.iter().zip(&typed).filter(|(o, s)| Some(&o.fine.label) == s.fine.as_ref()).count() as f64 / n;
    (c, f)
}

#[test]
fn stage_a_memorizes_a_small_set() {
    let data = generate(32, 7);
    let t = std::time::Instant::now();
    let (m, report) = train_stage_a(&data, &data, ExtractionStrategy::MultiTask, &cfg(40)).unwrap();
    let iou = context_iou(&m, &data);
    eprintln!("stage a iou {iou:.3} in {:?}, {:?}", t.elapsed(), report.checkpoints[0].selection);
    assert!(iou >= 0.95, "context span IoU {iou}");
}

#[test]
fn stage_b_memorizes_a_small_set() {
    let data = generate(64, 8);
    let t = std::time::Instant::now();
    let (m, _) = train_stage_b(&data, &data, StageBStrategy::MultiTask, &cfg(40)).unwrap();
    let (ta, ca) = stage_b_accuracy(&m, &data);
    eprintln!("stage b type {ta:.3} component {ca:.3} in {:?}", t.elapsed());
    assert!(ta >= 0.95 && ca >= 0.95);
}

#[test]
fn stage_c_memorizes_a_small_set() {
    let data = generate(64, 9);
    for strategy in [StageCStrategy::Individual, StageCStrategy::IndividualEmbedding, StageCStrategy::TwoStepMix] {
        let t = std::time::Instant::now();
        let (m, _) = train_stage_c(&data, &data, strategy, &cfg(40)).unwrap();
        let (ca, fa) = stage_c_accuracy(&m, &data);
        eprintln!("stage c {strategy}: coarse {ca:.3} fine {fa:.3} in {:?}", t.elapsed());
        assert!(ca >= 0.95 && fa >= 0.95, "{strategy}: coarse {ca} fine {fa}");
    }
}
