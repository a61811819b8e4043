use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ficle_core::corpus::synthetic::generate;
use ficle_core::corpus::write_corpus;
use ficle_models::pipeline::Explanation;
use serde_json::Value;

fn ficle(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ficle"))
        .args(args)
        .env("FICLE_RUN_ROOT", root.join("runs"))
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn json_out(o: &Output) -> Value {
    assert_eq!(code(o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).expect("stdout is JSON")
}

fn corpus(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let p = dir.join("corpus.jsonl");
    let mut buf = Vec::new();
    write_corpus(&mut buf, &generate(n, seed)).unwrap();
    fs::write(&p, buf).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_one() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&ficle(d.path(), &["frobnicate"])), 1);
    assert_eq!(code(&ficle(d.path(), &["stats", "--bogus"])), 1);
    assert_eq!(code(&ficle(d.path(), &["--help"])), 0);
    let data = corpus(d.path(), 20, 1);
    let bad_strategy = ficle(d.path(), &["train", "--stage", "b", "--strategy", "oracle_structure", "--data", s(&data)]);
    assert_eq!(code(&bad_strategy), 1);
    let zero = ficle(d.path(), &["train", "--stage", "a", "--strategy", "multi_task", "--epochs", "0", "--data", s(&data)]);
    assert_eq!(code(&zero), 1);
    assert!(String::from_utf8_lossy(&zero.stderr).contains("epochs"));
    // nothing was trained
    assert!(!d.path().join("runs").exists());
}

#[test]
fn validate_stats_and_split() {
    let d = tempfile::tempdir().unwrap();
    let data = corpus(d.path(), 200, 2);
    let report = json_out(&ficle(d.path(), &["validate", "--data", s(&data)]));
    assert_eq!(report["violations"].as_array().unwrap().len(), 0);

    let stats = json_out(&ficle(d.path(), &["stats", "--data", s(&data)]));
    assert_eq!(stats["total"], 200);
    let type_sum: u64 = stats["types"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(type_sum, 200);

    let out = d.path().join("split");
    let sizes = json_out(&ficle(d.path(), &["split", "--data", s(&data), "--seed", "3", "--out", s(&out)]));
    assert_eq!((sizes["train"].as_u64(), sizes["valid"].as_u64(), sizes["test"].as_u64()), (Some(160), Some(20), Some(20)));
    for f in ["train", "valid", "test"] {
        assert!(out.join(format!("{f}.jsonl")).exists());
    }
    let again = d.path().join("split2");
    json_out(&ficle(d.path(), &["split", "--data", s(&data), "--seed", "3", "--out", s(&again)]));
    assert_eq!(fs::read(out.join("test.jsonl")).unwrap(), fs::read(again.join("test.jsonl")).unwrap());

    // a corrupted span is a data error
    let text = fs::read_to_string(&data).unwrap();
    let mut v: Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    v["incon_context_span"]["start"] = Value::from(100000);
    let broken = d.path().join("broken.jsonl");
    fs::write(&broken, format!("{v}\n")).unwrap();
    let o = ficle(d.path(), &["validate", "--data", s(&broken)]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&ficle(d.path(), &["stats", "--data", s(&d.path().join("missing.jsonl"))])), 2);
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

fn train_losses(report: &Value) -> Vec<f64> {
    report["checkpoints"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|c| c["epochs"].as_array().unwrap().iter().map(|e| e["train_loss"].as_f64().unwrap()))
        .collect()
}

#[test]
fn train_writes_checkpoint_and_report() {
    let d = tempfile::tempdir().unwrap();
    let data = corpus(d.path(), 60, 4);
    let split = d.path().join("split");
    json_out(&ficle(d.path(), &["split", "--data", s(&data), "--out", s(&split)]));

    let o = ficle(
        d.path(),
        &["train", "--stage", "a", "--strategy", "multi_task", "--epochs", "2", "--batch-size", "16", "--data", s(&split)],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = d.path().join("runs/stage_a/multi_task");
    assert!(dir.join("model.json").exists());
    assert!(dir.join("joint/weights.safetensors").exists());
    let report = read_json(&dir.join("run_report.json"));
    assert_eq!(report["checkpoints"][0]["epochs"].as_array().unwrap().len(), 2);
    // discriminative default
    assert_eq!(report["effective_learning_rate"].as_f64(), Some(1e-5));
    assert_eq!(report["train_config"]["batch_size"], 16);
    assert_eq!(report["datasets"].as_array().unwrap().len(), 2);
    assert_eq!(report["datasets"][0]["sha256"].as_str().unwrap().len(), 64);
    let manifest = read_json(&dir.join("joint/manifest.json"));
    assert_eq!(manifest["dataset_hash"], report["datasets"][0]["sha256"]);
    let lines = fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
    assert!(lines.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));

    // same seed, same losses
    let again = d.path().join("again");
    let o = ficle(
        d.path(),
        &["train", "--stage", "a", "--strategy", "multi_task", "--epochs", "2", "--data", s(&split), "--checkpoint", s(&again)],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(train_losses(&report), train_losses(&read_json(&again.join("run_report.json"))));
}

#[test]
fn config_file_and_flags() {
    let d = tempfile::tempdir().unwrap();
    let data = corpus(d.path(), 30, 5);
    let cfg = d.path().join("run.toml");
    fs::write(&cfg, format!("[data]\npath = {:?}\n[train]\nepochs = 1\nlearning_rate = 0.002\nseed = 9\n", s(&data))).unwrap();
    let o = ficle(d.path(), &["--config", s(&cfg), "train", "--stage", "b", "--strategy", "two-step", "--seed", "10"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&d.path().join("runs/stage_b/two_step/run_report.json"));
    assert_eq!(report["train_config"]["seed"], 10);
    assert_eq!(report["train_config"]["epochs"], 1);
    assert_eq!(report["effective_learning_rate"].as_f64(), Some(0.002));
    let names: Vec<&str> = report["checkpoints"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["component", "type"]);

    for bad in ["[nonsense]\n", "[train]\nepoch = 1\n"] {
        fs::write(&cfg, bad).unwrap();
        let o = ficle(d.path(), &["--config", s(&cfg), "stats", "--data", s(&data)]);
        assert_eq!(code(&o), 1, "{bad}");
    }
}

#[test]
fn evaluate_predict_analyze_end_to_end() {
    let d = tempfile::tempdir().unwrap();
    let data = corpus(d.path(), 80, 6);
    let split = d.path().join("split");
    json_out(&ficle(d.path(), &["split", "--data", s(&data), "--out", s(&split)]));
    for (stage, strategy) in [("a", "multi_task"), ("b", "multi_task"), ("c", "individual_embedding"), ("c", "two_step_mix")] {
        let o = ficle(
            d.path(),
            &["train", "--stage", stage, "--strategy", strategy, "--epochs", "1", "--lr", "1e-3", "--data", s(&split)],
        );
        assert_eq!(code(&o), 0, "{stage}/{strategy}: {}", String::from_utf8_lossy(&o.stderr));
    }

    let ev = json_out(&ficle(d.path(), &["evaluate", "--data", s(&split), "--split", "test"]));
    let out = PathBuf::from(ev["out"].as_str().unwrap());
    assert!(out.starts_with(d.path().join("runs/eval")));
    for f in ["bundle.json", "type_confusion.csv", "coverage_by_length.csv", "span_errors.csv", "explanations.jsonl", "run_report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = fs::read(out.join("bundle.json")).unwrap();
    json_out(&ficle(d.path(), &["evaluate", "--data", s(&split), "--split", "test"]));
    assert_eq!(first, fs::read(out.join("bundle.json")).unwrap());
    let csv = fs::read_to_string(out.join("type_confusion.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);

    let gold = json_out(&ficle(d.path(), &["evaluate", "--gold", "--data", s(&split), "--out", s(&d.path().join("gold"))]));
    for sp in gold["summary"]["spans"].as_array().unwrap() {
        assert_eq!(sp["iou"].as_f64(), Some(1.0));
    }
    assert_eq!(gold["summary"]["type_weighted_f1"].as_f64(), Some(1.0));

    let input = d.path().join("in.jsonl");
    fs::write(
        &input,
        "{\"id\": \"x\", \"claim\": \"Karl Malone played the shooting guard position.\", \"context\": \"He is considered one of the best power forwards in NBA history .\"}\n",
    )
    .unwrap();
    let o = ficle(d.path(), &["predict", "--input", s(&input)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e: Explanation = serde_json::from_slice(&o.stdout).unwrap();
    e.check_invariants().unwrap();
    assert_eq!(e.id.as_deref(), Some("x"));

    let an = d.path().join("analysis");
    let a = json_out(&ficle(
        d.path(),
        &["analyze", "--input", s(&out.join("explanations.jsonl")), "--data", s(&split), "--out", s(&an)],
    ));
    assert_eq!(a["matched"].as_u64(), ev["summary"]["spans"][0]["n"].as_u64());
    assert!(an.join("analysis.json").exists() && an.join("span_errors.csv").exists());
}
