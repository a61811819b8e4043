use ficle_core::corpus::synthetic::generate;
use ficle_core::corpus::{CharSpan, ClaimComponent, CoarseEntityType, FactTriple, FineEntityType, InconsistencyType, Sample};
use ficle_core::strategy::{ExtractionStrategy, StageBStrategy, StageCStrategy};
use ficle_models::classifier::train_stage_b;
use ficle_models::entity_typer::train_stage_c;
use ficle_models::pipeline::{evaluate_with, explain_batch, GoldStages, Pipeline, PipelineConfig, Query, Thresholds};
use ficle_models::span_extractor::train_stage_a;
use ficle_models::{ModelError, TrainConfig};

fn span(host: &str, text: &str) -> CharSpan {
    CharSpan::locate(host, text).unwrap()
}

fn kong() -> Sample {
    let claim = "Kong: Skull Island is not a reboot.";
    let context = "The film is a reboot of the King Kong franchise and serves as the second film in Legendary's MonsterVerse .";
    Sample {
        id: "kong".into(),
        claim: claim.into(),
        context: context.into(),
        triple: FactTriple::new(span(claim, "Kong: Skull Island"), span(claim, "is not a"), span(claim, "reboot")),
        incon_context_span: span(context, "is a"),
        component: ClaimComponent::RelationHead,
        itype: InconsistencyType::Negation,
        coarse: Some(CoarseEntityType::Entertainment),
        fine: Some(FineEntityType::new("brand")),
    }
}

fn modi() -> Sample {
    let claim = "Prime Minister Swami Vivekananda enthusiastically hoisted the Indian flag.";
    let context = "Prime Minister Narendra Modi enthusiastically hoisted the Indian flag.";
    let mut triple = FactTriple::new(
        span(claim, "Prime Minister Swami Vivekananda"),
        span(claim, "enthusiastically hoisted"),
        span(claim, "the Indian flag"),
    );
    triple.source_head = Some(span(claim, "Swami Vivekananda"));
    triple.source_modifier = Some(span(claim, "Prime Minister"));
    Sample {
        id: "modi".into(),
        claim: claim.into(),
        context: context.into(),
        triple,
        incon_context_span: span(context, "Narendra Modi"),
        component: ClaimComponent::SubjectHead,
        itype: InconsistencyType::Simple,
        coarse: None,
        fine: None,
    }
}

#[test]
fn gold_stages_reproduce_annotated_explanations() {
    let samples = vec![kong(), modi()];
    let gold = GoldStages::new(&samples);
    let qs: Vec<Query> = samples.iter().map(Query::from_sample).collect();
    let ex = explain_batch(&gold, &gold, &gold, &qs, &Thresholds::default()).unwrap();

    assert_eq!(ex[0].itype, InconsistencyType::Negation);
    assert_eq!(ex[0].coarse, Some(CoarseEntityType::Entertainment));
    assert_eq!(ex[0].fine, Some(FineEntityType::new("brand")));
    assert_eq!(ex[0].component_span.text, "is not a");

    assert_eq!(ex[1].component, ClaimComponent::SubjectHead);
    assert_eq!(ex[1].incon_context_span.text, "Narendra Modi");
    assert_eq!(ex[1].component_span.text, "Swami Vivekananda");
    assert_eq!((ex[1].coarse, ex[1].fine.clone()), (None, None));
    for e in &ex {
        e.check_invariants().unwrap();
        assert!(e.flags.low_confidence.is_empty());
    }
}

#[test]
fn gold_injection_scores_perfectly() {
    let mut samples = generate(60, 11);
    samples.push(kong());
    samples.push(modi());
    let gold = GoldStages::new(&samples);
    let ev = evaluate_with(&gold, &gold, &gold, &[], &samples, &Thresholds::default()).unwrap();
    let b = &ev.bundle;
    for s in &b.spans {
        assert_eq!((s.em, s.iou), (1.0, 1.0), "{}", s.field);
    }
    for r in [&b.pipeline_input, &b.gold_input] {
        assert_eq!(r.itype.weighted_f1, 1.0);
        assert_eq!(r.component.weighted_f1, 1.0);
        assert_eq!(r.coarse.as_ref().unwrap().weighted_f1, 1.0);
        assert_eq!(r.fine.as_ref().unwrap().weighted_f1, 1.0);
    }
    assert_eq!(b.type_confusion.trace(), samples.len() as u64);
    assert_eq!(b.context_span_errors.errors, 0);
    assert!(b.oracle_dominance_warnings.is_empty());
    assert_eq!(b.length_by_correctness.incorrect_n, 0);
    assert!(ev.explanations.iter().any(|e| e.flags.not_entity_typed));
}

#[test]
fn gold_stages_need_ids() {
    let s = kong();
    let gold = GoldStages::new(std::slice::from_ref(&s));
    let q = Query {
        id: None,
        claim: &s.claim,
        context: &s.context,
        triple: None,
    };
    let err = explain_batch(&gold, &gold, &gold, &[q], &Thresholds::default()).unwrap_err();
    assert!(matches!(err, ModelError::Stage { stage: "a", .. }));
}

#[test]
fn trained_pipeline_loads_runs_and_evaluates() {
    let data = generate(24, 12);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        learning_rate: Some(1e-3),
        ..Default::default()
    };
    let root = tempfile::tempdir().unwrap();
    let (a, _) = train_stage_a(&data, &data, ExtractionStrategy::MultiTask, &cfg).unwrap();
    a.save(&root.path().join("stage_a/multi_task")).unwrap();
    let (b, _) = train_stage_b(&data, &data, StageBStrategy::MultiTask, &cfg).unwrap();
    b.save(&root.path().join("stage_b/multi_task")).unwrap();
    for s in [StageCStrategy::IndividualEmbedding, StageCStrategy::TwoStepMix] {
        let (c, _) = train_stage_c(&data, &data, s, &cfg).unwrap();
        c.save(&root.path().join("stage_c").join(s.as_str())).unwrap();
    }

    let pc = PipelineConfig::default().resolve(root.path());
    let p = Pipeline::load(&pc).unwrap();
    let e1 = p.run(&data[0].claim, &data[0].context).unwrap();
    let e2 = p.run(&data[0].claim, &data[0].context).unwrap();
    assert_eq!(e1, e2);
    e1.check_invariants().unwrap();
    assert!(e1.coarse.is_some() && e1.fine.is_some());
    assert!(e1.scores.context_span.is_some() && e1.scores.fine.is_some());

    let ev = p.evaluate(&data).unwrap();
    assert_eq!(ev.bundle.samples, data.len());
    assert_eq!(ev.bundle.spans.len(), 4);
    assert_eq!(ev.bundle.type_confusion.total(), data.len() as u64);
    assert!(ev.bundle.gold_input.coarse.is_some());
    assert_eq!(p.evaluate(&data).unwrap().bundle, ev.bundle);

    let mut wrong = pc.clone();
    wrong.stage_b.strategy = StageBStrategy::TwoStep;
    let err = Pipeline::load(&wrong).err().unwrap();
    assert!(matches!(err, ModelError::Stage { stage: "b", .. }));
}
