use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::Context;
use ficle_models::checkpoint::write_json;
use ficle_models::train::{CheckpointTrainReport, MetricRecord};
use ficle_models::TrainConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const METRICS_FILE: &str = "metrics.jsonl";

#[derive(Debug, Clone, Serialize)]
pub struct DatasetRef {
    pub path: PathBuf,
    pub sha256: String,
    pub samples: usize,
}

impl DatasetRef {
    pub fn new(path: &Path, samples: usize) -> anyhow::Result<Self> {
        Ok(DatasetRef {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
            samples,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Hardware {
    pub os: &'static str,
    pub arch: &'static str,
    pub cpus: usize,
    pub device: &'static str,
    /// What can make two runs with the same seed differ.
    pub nondeterminism: &'static str,
}

impl Hardware {
    pub fn detect() -> Self {
        Hardware {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            device: "cpu",
            nondeterminism: "none known: single-device CPU kernels, seeded init and shuffles",
        }
    }
}

/// Everything needed to trace a training or evaluation run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effective_learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pipeline_config: Option<serde_json::Value>,
    pub config_hash: String,
    pub git_commit: Option<String>,
    pub datasets: Vec<DatasetRef>,
    pub checkpoints: Vec<CheckpointTrainReport>,
    /// Final metrics; for training, the records of each selected epoch.
    pub metrics: serde_json::Value,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
    pub hardware: Hardware,
}

impl RunReport {
    pub fn write(&self, dir: &Path) -> anyhow::Result<()> {
        write_json(&dir.join(RUN_REPORT_FILE), self)?;
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Current commit of the working directory, when it is a git checkout.
pub fn git_commit() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

/// One JSON object per line, written through a temporary file.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.write_all(b"\n")?;
    }
    ficle_models::checkpoint::atomic_write(path, &buf)?;
    Ok(())
}

/// Metric records of each checkpoint's selected epoch.
pub fn selected_metrics(records: &[MetricRecord], checkpoints: &[CheckpointTrainReport]) -> Vec<MetricRecord> {
    records
        .iter()
        .filter(|r| r.loss.is_none())
        .filter(|r| {
            checkpoints
                .iter()
                .any(|c| c.name == r.checkpoint && c.selection.selected_epoch == r.epoch)
        })
        .cloned()
        .collect()
}
