use ficle_core::corpus::synthetic::generate;
use ficle_core::strategy::{ExtractionStrategy, StageBStrategy, StageCStrategy};
use ficle_models::checkpoint::{StageBundle, CLASS_TABLE_FILE};
use ficle_models::classifier::{train_stage_b, StageBModel, StageBQuery};
use ficle_models::entity_typer::{train_stage_c, ClassEmbeddingTable, StageCModel, StageCQuery};
use ficle_models::span_extractor::{train_stage_a, StageAModel, StageAQuery};
use ficle_models::{CheckpointFamily, ModelError, TrainConfig};
use proptest::prelude::*;

fn quick() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 4,
        learning_rate: Some(1e-3),
        ..Default::default()
    }
}

#[test]
fn same_seed_same_losses_and_predictions() {
    let data = generate(12, 3);
    let (m1, r1) = train_stage_b(&data, &data, StageBStrategy::TwoStep, &quick()).unwrap();
    let (m2, r2) = train_stage_b(&data, &data, StageBStrategy::TwoStep, &quick()).unwrap();
    assert_eq!(r1, r2);
    let qs: Vec<StageBQuery> = data.iter().map(StageBQuery::gold).collect();
    assert_eq!(m1.predict_batch(&qs).unwrap(), m2.predict_batch(&qs).unwrap());

    let other = TrainConfig { seed: 43, ..quick() };
    let (_, r3) = train_stage_b(&data, &data, StageBStrategy::TwoStep, &other).unwrap();
    assert_ne!(r1.checkpoints[0].epochs, r3.checkpoints[0].epochs);
}

#[test]
fn stage_a_round_trip_and_layout() {
    let data = generate(8, 4);
    let dir = tempfile::tempdir().unwrap();
    for (strategy, n) in [
        (ExtractionStrategy::StructureIgnorant, 1),
        (ExtractionStrategy::TwoStep, 2),
        (ExtractionStrategy::MultiTask, 1),
        (ExtractionStrategy::OracleStructure, 1),
    ] {
        let (m, report) = train_stage_a(&data, &data, strategy, &quick()).unwrap();
        assert_eq!(m.num_checkpoints(), n, "{strategy}");
        assert_eq!(report.checkpoints.len(), n);
        assert!(report.checkpoints.iter().all(|c| c.epochs.len() == 2));
        let path = dir.path().join(strategy.as_str());
        m.save(&path).unwrap();
        assert_eq!(StageBundle::read(&path).unwrap().checkpoints.len(), n);
        let back = StageAModel::load(&path).unwrap();
        let oracle = strategy == ExtractionStrategy::OracleStructure;
        let qs: Vec<StageAQuery> = data
            .iter()
            .map(|s| StageAQuery {
                claim: &s.claim,
                context: &s.context,
                srt: oracle.then_some(&s.triple),
            })
            .collect();
        assert_eq!(m.predict_batch(&qs).unwrap(), back.predict_batch(&qs).unwrap());
    }
}

#[test]
fn oracle_structure_requires_the_triple() {
    let data = generate(4, 5);
    let (m, _) = train_stage_a(&data, &data, ExtractionStrategy::OracleStructure, &quick()).unwrap();
    let err = m.predict(&data[0].claim, &data[0].context, None).unwrap_err();
    assert!(matches!(err, ModelError::MissingInput(_)));
    let (m, _) = train_stage_a(&data, &data, ExtractionStrategy::StructureIgnorant, &quick()).unwrap();
    assert!(m.predict(&data[0].claim, &data[0].context, Some(&data[0].triple)).is_err());
    assert!(m.predict_srt(&data[0].claim, &data[0].context).is_err());
}

#[test]
fn stage_b_round_trip() {
    let data = generate(8, 6);
    let dir = tempfile::tempdir().unwrap();
    for strategy in StageBStrategy::ALL {
        let (m, _) = train_stage_b(&data, &data, *strategy, &quick()).unwrap();
        let path = dir.path().join(strategy.as_str());
        m.save(&path).unwrap();
        let back = StageBModel::load(&path).unwrap();
        assert_eq!(back.checkpoint_names(), m.checkpoint_names());
        let qs: Vec<StageBQuery> = data.iter().map(StageBQuery::gold).collect();
        assert_eq!(m.predict_batch(&qs).unwrap(), back.predict_batch(&qs).unwrap());
    }
    // two_step trains the component checkpoint first
    let (m, _) = train_stage_b(&data, &data, StageBStrategy::TwoStep, &quick()).unwrap();
    assert_eq!(m.checkpoint_names(), vec!["component", "type"]);
}

#[test]
fn stage_c_round_trip_keeps_class_table_exact() {
    let data = generate(16, 7);
    let dir = tempfile::tempdir().unwrap();
    for strategy in StageCStrategy::ALL {
        let (m, _) = train_stage_c(&data, &data, *strategy, &quick()).unwrap();
        let path = dir.path().join(strategy.as_str());
        m.save(&path).unwrap();
        let back = StageCModel::load(&path).unwrap();
        let tables = |m: &StageCModel| {
            [m.coarse_checkpoint(), m.fine_checkpoint()]
                .map(|c| c.class_table().cloned())
        };
        assert_eq!(tables(&m), tables(&back));
        let has_table = strategy.coarse_uses_embedding();
        assert_eq!(path.join("coarse").join(CLASS_TABLE_FILE).exists(), has_table);
        if has_table {
            let t = ClassEmbeddingTable::load(&path.join("coarse").join(CLASS_TABLE_FILE)).unwrap();
            let bits = |t: &ClassEmbeddingTable| t.vectors.iter().flatten().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&t), bits(m.coarse_checkpoint().class_table().unwrap()));
        }
        let typed: Vec<_> = data.iter().filter(|s| s.entity_types().is_some()).collect();
        let qs: Vec<StageCQuery> = typed
            .iter()
            .map(|s| StageCQuery {
                context_span: &s.incon_context_span,
                claim_span: s.claim_component_span(),
            })
            .collect();
        assert_eq!(m.predict_batch(&qs, None).unwrap(), back.predict_batch(&qs, None).unwrap());
        if strategy.fine_uses_coarse() {
            assert!(m.predict_fine(&qs[0], None).is_err());
        } else {
            assert!(m.predict_fine(&qs[0], typed[0].coarse).is_err());
        }
    }
}

#[test]
fn invalid_configs_fail_before_training() {
    let data = generate(4, 8);
    let zero = TrainConfig { epochs: 0, ..quick() };
    assert!(train_stage_b(&data, &data, StageBStrategy::Individual, &zero).is_err());
    let bart = TrainConfig {
        checkpoint_family: CheckpointFamily::Bart,
        ..quick()
    };
    assert!(train_stage_a(&data, &data, ExtractionStrategy::MultiTask, &bart).is_err());
    assert!(train_stage_c(&data, &data, StageCStrategy::IndividualEmbedding, &bart).is_err());
    let untyped: Vec<_> = data
        .iter()
        .cloned()
        .map(|mut s| {
            s.coarse = None;
            s.fine = None;
            s
        })
        .collect();
    assert!(matches!(
        train_stage_c(&untyped, &untyped, StageCStrategy::Individual, &quick()),
        Err(ModelError::EmptyTrainingSet { .. })
    ));
}

fn brute_nearest(table: &ClassEmbeddingTable, v: &[f32]) -> usize {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
    let mut best = (0, f32::NEG_INFINITY);
    for (k, c) in table.vectors.iter().enumerate() {
        let mut dot = 0.0f32;
        for d in 0..v.len() {
            dot += c[d] * v[d];
        }
        if dot / norm > best.1 {
            best = (k, dot / norm);
        }
    }
    best.0
}

proptest! {
    #[test]
    fn nearest_class_matches_brute_force(
        rows in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 4), 1..8),
        v in prop::collection::vec(-1.0f32..1.0, 4),
    ) {
        let vectors: Vec<Vec<f32>> = rows
            .into_iter()
            .map(|r| {
                let n = r.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-6);
                r.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let table = ClassEmbeddingTable {
            labels: (0..vectors.len()).map(|i| i.to_string()).collect(),
            vectors,
        };
        prop_assert_eq!(table.nearest(&v).0, brute_nearest(&table, &v));
    }
}
