use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};
use ficle_core::corpus::{
    compute_stats, load_corpus, parse_corpus, partition_valid, split_corpus_with, write_corpus, FactTriple,
    InconsistencyType, Label, Sample, SplitMode,
};
use ficle_core::metrics::{
    classification_report, coverage_by_length, length_by_correctness, span_error_histogram, span_scores, BucketCoverage,
    LengthBucket, SpanErrorCategory,
};
use ficle_core::strategy::{ExtractionStrategy, StageBStrategy, StageCStrategy};
use ficle_models::checkpoint::StageId;
use ficle_models::classifier::train_stage_b;
use ficle_models::entity_typer::train_stage_c;
use ficle_models::pipeline::{evaluate_with, Evaluation, Explanation, GoldStages, Pipeline, Query};
use ficle_models::span_extractor::train_stage_a;
use ficle_models::train::StageTrainReport;
use ficle_models::TrainConfig;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::{AnalyzeArgs, DataArgs, EvaluateArgs, PredictArgs, SplitArgs, SplitModeArg, TrainArgs};
use crate::config::FileConfig;
use crate::report::{
    git_commit, selected_metrics, sha256_file, sha256_json, write_jsonl, DatasetRef, Hardware, RunReport, METRICS_FILE,
};

/// Failure classes, mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
    Run(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Run(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Usage(e) | Failure::Data(e) | Failure::Run(e) => e,
        }
    }
}

type Outcome = Result<(), Failure>;

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
    fn run(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
    fn run(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Run(e.into()))
    }
}

fn load(path: &Path) -> Result<Vec<Sample>, Failure> {
    load_corpus(path).with_context(|| format!("loading {}", path.display())).data()
}

/// Loads a corpus and sets aside samples that stay invalid after
/// normalization, logging each.
fn load_clean(path: &Path) -> Result<Vec<Sample>, Failure> {
    let raw = load(path)?;
    let (clean, quarantined, repaired) = partition_valid(&raw);
    if repaired > 0 {
        log::info!("{}: normalized {repaired} samples", path.display());
    }
    for q in &quarantined {
        let v: Vec<String> = q.violations.iter().map(ToString::to_string).collect();
        log::warn!("{}: quarantined '{}': {}", path.display(), q.id, v.join("; "));
    }
    Ok(clean)
}

fn emit(out: Option<&Path>, value: &impl Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(value).run()?;
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(parent).run()?;
            }
            fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())).run()
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

pub fn validate(cfg: &FileConfig, args: &DataArgs) -> Outcome {
    let path = cfg.data_file(args.data.as_deref(), args.split.as_deref(), "train").usage()?;
    let raw = load(&path)?;
    let (_, quarantined, repaired) = partition_valid(&raw);
    let report = json!({
        "path": path,
        "samples": raw.len(),
        "repaired": repaired,
        "violations": quarantined,
    });
    emit(args.out.as_deref(), &report)?;
    if quarantined.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(anyhow!("{} of {} samples violate the schema", quarantined.len(), raw.len())))
    }
}

pub fn stats(cfg: &FileConfig, args: &DataArgs) -> Outcome {
    let path = cfg.data_file(args.data.as_deref(), args.split.as_deref(), "train").usage()?;
    let samples = load(&path)?;
    let stats = compute_stats(&samples).data()?;
    emit(args.out.as_deref(), &stats)
}

pub fn split(cfg: &FileConfig, args: &SplitArgs) -> Outcome {
    let path = cfg.data_file(args.data.as_deref(), None, "all").usage()?;
    let samples = load_clean(&path)?;
    let seed = args.seed.unwrap_or(cfg.train.seed);
    let mode = match args.mode {
        SplitModeArg::Random => SplitMode::Random,
        SplitModeArg::Stratified => SplitMode::Stratified,
    };
    let split = split_corpus_with(&samples, seed, mode).data()?;
    fs::create_dir_all(&args.out).run()?;
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        let mut buf = Vec::new();
        write_corpus(&mut buf, part).run()?;
        ficle_models::checkpoint::atomic_write(&args.out.join(format!("{name}.jsonl")), &buf).run()?;
    }
    let (a, b, c) = split.sizes();
    emit(
        None,
        &json!({"seed": seed, "mode": format!("{mode:?}").to_lowercase(), "train": a, "valid": b, "test": c}),
    )
}

fn effective_train_config(cfg: &FileConfig, args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut t = cfg.train.clone();
    if let Some(v) = args.seed {
        t.seed = v;
    }
    if let Some(v) = args.epochs {
        t.epochs = v;
    }
    if let Some(v) = args.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = args.lr {
        t.learning_rate = Some(v);
    }
    if args.select_last {
        t.select_last = true;
    }
    t.validate().usage()?;
    t.ensure_constructible().usage()?;
    Ok(t)
}

enum StageStrategy {
    A(ExtractionStrategy),
    B(StageBStrategy),
    C(StageCStrategy),
}

fn parse_strategy(stage: StageId, s: &str) -> Result<StageStrategy, Failure> {
    let err = |e: String| Failure::Usage(anyhow!("stage {stage}: {e}"));
    Ok(match stage {
        StageId::A => StageStrategy::A(s.parse().map_err(err)?),
        StageId::B => StageStrategy::B(s.parse().map_err(err)?),
        StageId::C => StageStrategy::C(s.parse().map_err(err)?),
    })
}

pub fn train(cfg: &FileConfig, args: &TrainArgs) -> Outcome {
    let started = Instant::now();
    let strategy = parse_strategy(args.stage, &args.strategy)?;
    let tcfg = effective_train_config(cfg, args)?;
    if let StageStrategy::C(s) = &strategy {
        if s.requires_discriminative() && tcfg.checkpoint_family.is_generative() {
            return Err(Failure::Usage(anyhow!("{s} needs a discriminative checkpoint family")));
        }
    }

    let train_path = cfg.data_file(args.data.as_deref(), args.split.as_deref(), "train").usage()?;
    let valid_path = match &args.valid {
        Some(p) => Some(p.clone()),
        None => {
            let sibling = train_path.with_file_name("valid.jsonl");
            (sibling.exists() && sibling != train_path).then_some(sibling)
        }
    };
    let train = load_clean(&train_path)?;
    let valid = match &valid_path {
        Some(p) => load_clean(p)?,
        None => {
            log::warn!("no validation file; epochs are selected on the training data");
            Vec::new()
        }
    };
    let dataset_hash = sha256_file(&train_path).data()?;
    let mut datasets = vec![DatasetRef::new(&train_path, train.len()).data()?];
    if let Some(p) = &valid_path {
        datasets.push(DatasetRef::new(p, valid.len()).data()?);
    }

    let stage_name = args.stage.to_string();
    let strategy_name = args.strategy.replace('-', "_");
    let dir = args
        .checkpoint
        .clone()
        .or_else(|| args.out.clone())
        .unwrap_or_else(|| cfg.run_root(None).join(format!("stage_{stage_name}")).join(&strategy_name));
    log::info!(
        "training stage {stage_name} / {strategy_name} on {} samples ({} valid), lr {}",
        train.len(),
        valid.len(),
        tcfg.effective_learning_rate()
    );

    let report: StageTrainReport = match strategy {
        StageStrategy::A(s) => {
            let (mut m, r) = train_stage_a(&train, &valid, s, &tcfg).run()?;
            m.set_dataset_hash(&dataset_hash);
            m.save(&dir).run()?;
            r
        }
        StageStrategy::B(s) => {
            let (mut m, r) = train_stage_b(&train, &valid, s, &tcfg).run()?;
            m.set_dataset_hash(&dataset_hash);
            m.save(&dir).run()?;
            r
        }
        StageStrategy::C(s) => {
            let (mut m, r) = train_stage_c(&train, &valid, s, &tcfg).run()?;
            m.set_dataset_hash(&dataset_hash);
            m.save(&dir).run()?;
            r
        }
    };

    write_jsonl(&dir.join(METRICS_FILE), &report.records).run()?;
    let final_metrics = selected_metrics(&report.records, &report.checkpoints);
    let run = RunReport {
        command: "train".into(),
        stage: Some(stage_name),
        strategy: Some(strategy_name),
        effective_learning_rate: Some(tcfg.effective_learning_rate()),
        config_hash: tcfg.hash(),
        train_config: Some(tcfg),
        pipeline_config: None,
        git_commit: git_commit(),
        datasets,
        checkpoints: report.checkpoints.clone(),
        metrics: serde_json::to_value(&final_metrics).run()?,
        artifacts: artifact_list(&dir),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        hardware: Hardware::detect(),
    };
    run.write(&dir).run()?;
    println!("{}", dir.display());
    Ok(())
}

fn artifact_list(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let Ok(rd) = fs::read_dir(&d) else { continue };
        for e in rd.flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else if let Ok(rel) = p.strip_prefix(dir) {
                out.push(rel.display().to_string());
            }
        }
    }
    out.sort();
    out
}

fn load_pipeline(cfg: &FileConfig, root: &Path) -> Result<Pipeline, Failure> {
    let pc = cfg.pipeline.clone().resolve(root);
    Pipeline::load(&pc).run()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Outcome {
    let mut buf = header.join(",") + "\n";
    for r in rows {
        buf.push_str(&r.join(","));
        buf.push('\n');
    }
    ficle_models::checkpoint::atomic_write(path, buf.as_bytes()).run()
}

fn coverage_rows(c: &[BucketCoverage]) -> Vec<Vec<String>> {
    c.iter()
        .map(|b| {
            vec![
                b.bucket.clone(),
                b.count.to_string(),
                b.mean_coverage.map_or(String::new(), |v| format!("{v:.6}")),
            ]
        })
        .collect()
}

fn histogram_rows(h: &ficle_core::metrics::ErrorHistogram) -> Vec<Vec<String>> {
    SpanErrorCategory::ALL
        .iter()
        .map(|&c| {
            vec![
                c.as_str().to_string(),
                h.count(c).to_string(),
                format!("{:.4}", h.percent_of_total(c)),
                format!("{:.4}", h.percent_of_errors(c)),
            ]
        })
        .collect()
}

pub fn evaluate(cfg: &FileConfig, args: &EvaluateArgs) -> Outcome {
    let started = Instant::now();
    let path = cfg.data_file(args.data.as_deref(), args.split.as_deref(), "test").usage()?;
    let samples = load_clean(&path)?;
    if samples.is_empty() {
        return Err(Failure::Data(anyhow!("{} has no usable samples", path.display())));
    }
    let root = cfg.run_root(args.checkpoint.as_deref());
    let dataset = DatasetRef::new(&path, samples.len()).data()?;
    let pipeline_json = json!({"pipeline": cfg.pipeline, "gold": args.gold});
    let config_hash = sha256_json(&pipeline_json);

    let Evaluation { bundle, explanations } = if args.gold {
        let gold = GoldStages::new(&samples);
        evaluate_with(&gold, &gold, &gold, &[], &samples, &cfg.pipeline.thresholds).run()?
    } else {
        load_pipeline(cfg, &root)?.evaluate(&samples).run()?
    };

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| root.join("eval").join(&config_hash[..16]));
    fs::create_dir_all(&out).run()?;
    ficle_models::checkpoint::write_json(&out.join("bundle.json"), &bundle).run()?;
    ficle_models::checkpoint::atomic_write(&out.join("type_confusion.csv"), bundle.type_confusion.to_csv_string().as_bytes())
        .run()?;
    write_csv(
        &out.join("coverage_by_length.csv"),
        &["gold_length", "count", "mean_coverage"],
        &coverage_rows(&bundle.coverage_by_length),
    )?;
    write_csv(
        &out.join("span_errors.csv"),
        &["category", "count", "percent_of_total", "percent_of_errors"],
        &histogram_rows(&bundle.context_span_errors),
    )?;
    write_jsonl(&out.join("explanations.jsonl"), &explanations).run()?;

    let summary = json!({
        "spans": bundle.spans,
        "type_weighted_f1": bundle.pipeline_input.itype.weighted_f1,
        "component_weighted_f1": bundle.pipeline_input.component.weighted_f1,
        "coarse_weighted_f1": bundle.pipeline_input.coarse.as_ref().map(|r| r.weighted_f1),
        "fine_weighted_f1": bundle.pipeline_input.fine.as_ref().map(|r| r.weighted_f1),
        "gold_input_type_weighted_f1": bundle.gold_input.itype.weighted_f1,
        "oracle_dominance_warnings": bundle.oracle_dominance_warnings,
    });
    let run = RunReport {
        command: "evaluate".into(),
        stage: None,
        strategy: None,
        train_config: None,
        effective_learning_rate: None,
        pipeline_config: Some(pipeline_json),
        config_hash,
        git_commit: git_commit(),
        datasets: vec![dataset],
        checkpoints: Vec::new(),
        metrics: summary.clone(),
        artifacts: artifact_list(&out),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        hardware: Hardware::detect(),
    };
    run.write(&out).run()?;
    emit(None, &json!({"out": out, "summary": summary}))
}

struct PredictInput {
    id: Option<String>,
    claim: String,
    context: String,
    triple: Option<FactTriple>,
}

fn parse_predict_line(line: &str, n: usize) -> Result<PredictInput, Failure> {
    // Full corpus records carry a triple, which oracle_structure needs.
    if let Ok(mut v) = parse_corpus(line) {
        let s = v.remove(0);
        return Ok(PredictInput {
            id: Some(s.id),
            claim: s.claim,
            context: s.context,
            triple: Some(s.triple),
        });
    }
    let v: Value = serde_json::from_str(line).with_context(|| format!("line {n}: not JSON")).data()?;
    let field = |k: &str| -> Result<String, Failure> {
        v.get(k)
            .and_then(Value::as_str)
            .map(String::from)
            .ok_or_else(|| Failure::Data(anyhow!("line {n}: missing string field '{k}'")))
    };
    Ok(PredictInput {
        id: v.get("id").and_then(Value::as_str).map(String::from),
        claim: field("claim")?,
        context: field("context")?,
        triple: None,
    })
}

pub fn predict(cfg: &FileConfig, args: &PredictArgs) -> Outcome {
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))
        .data()?;
    let inputs = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_predict_line(l, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let pipeline = load_pipeline(cfg, &cfg.run_root(args.checkpoint.as_deref()))?;
    let mut sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display())).run()?),
        None => Box::new(std::io::stdout().lock()),
    };
    for chunk in inputs.chunks(32) {
        let qs: Vec<Query> = chunk
            .iter()
            .map(|x| Query {
                id: x.id.as_deref(),
                claim: &x.claim,
                context: &x.context,
                triple: x.triple.as_ref(),
            })
            .collect();
        for e in pipeline.run_batch(&qs).run()? {
            serde_json::to_writer(&mut sink, &e).run()?;
            sink.write_all(b"\n").run()?;
        }
    }
    sink.flush().run()
}

#[derive(Serialize)]
struct Analysis {
    matched: usize,
    unmatched_predictions: usize,
    spans: Vec<Value>,
    context_span_errors: ficle_core::metrics::ErrorHistogram,
    dominant_error: Option<SpanErrorCategory>,
    coverage_by_length: Vec<BucketCoverage>,
    length_by_correctness: ficle_core::metrics::LengthByCorrectness,
    type_accuracy: f64,
    type_weighted_f1: f64,
}

pub fn analyze(cfg: &FileConfig, args: &AnalyzeArgs) -> Outcome {
    let gold_path = cfg.data_file(args.data.as_deref(), args.split.as_deref(), "test").usage()?;
    let gold = load(&gold_path)?;
    let by_id: HashMap<&str, &Sample> = gold.iter().map(|s| (s.id.as_str(), s)).collect();
    let text = fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))
        .data()?;
    let mut pairs: Vec<(Explanation, &Sample)> = Vec::new();
    let mut unmatched = 0;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let e: Explanation = serde_json::from_str(line)
            .with_context(|| format!("{} line {}", args.input.display(), i + 1))
            .data()?;
        match e.id.as_deref().and_then(|id| by_id.get(id)) {
            Some(s) => pairs.push((e, s)),
            None => unmatched += 1,
        }
    }
    if pairs.is_empty() {
        return Err(Failure::Data(anyhow!("no prediction ids match the gold corpus")));
    }

    let span_of = |f: &str, t: &FactTriple| -> String {
        match f {
            "source" => t.source.text.clone(),
            "relation" => t.relation.text.clone(),
            _ => t.target.text.clone(),
        }
    };
    let mut spans = Vec::new();
    for f in ["source", "relation", "target"] {
        let p: Vec<String> = pairs.iter().map(|(e, _)| span_of(f, &e.triple)).collect();
        let g: Vec<String> = pairs.iter().map(|(_, s)| span_of(f, &s.triple)).collect();
        spans.push(json!({"field": f, "scores": span_scores(&p, &g).data()?}));
    }
    let pc: Vec<&str> = pairs.iter().map(|(e, _)| e.incon_context_span.text.as_str()).collect();
    let gc: Vec<&str> = pairs.iter().map(|(_, s)| s.incon_context_span.text.as_str()).collect();
    spans.push(json!({"field": "context_span", "scores": span_scores(&pc, &gc).data()?}));
    let hist = span_error_histogram(&pc, &gc).data()?;
    let cov = coverage_by_length(&pc, &gc, &LengthBucket::default_buckets()).data()?;
    let pt: Vec<InconsistencyType> = pairs.iter().map(|(e, _)| e.itype).collect();
    let gt: Vec<InconsistencyType> = pairs.iter().map(|(_, s)| s.itype).collect();
    let types = classification_report(&pt, &gt, InconsistencyType::ALL).data()?;

    fs::create_dir_all(&args.out).run()?;
    ficle_models::checkpoint::atomic_write(&args.out.join("type_confusion.csv"), types.confusion.to_csv_string().as_bytes())
        .run()?;
    write_csv(
        &args.out.join("coverage_by_length.csv"),
        &["gold_length", "count", "mean_coverage"],
        &coverage_rows(&cov),
    )?;
    write_csv(
        &args.out.join("span_errors.csv"),
        &["category", "count", "percent_of_total", "percent_of_errors"],
        &histogram_rows(&hist),
    )?;
    let analysis = Analysis {
        matched: pairs.len(),
        unmatched_predictions: unmatched,
        spans,
        dominant_error: hist.dominant_error(),
        context_span_errors: hist,
        coverage_by_length: cov,
        length_by_correctness: length_by_correctness(&pc, &gc).data()?,
        type_accuracy: types.accuracy,
        type_weighted_f1: types.weighted_f1,
    };
    ficle_models::checkpoint::write_json(&args.out.join("analysis.json"), &analysis).run()?;
    emit(None, &analysis)
}
