use std::path::{Path, PathBuf};

use anyhow::Context;
use ficle_models::pipeline::PipelineConfig;
use ficle_models::TrainConfig;
use serde::{Deserialize, Serialize};

pub const RUN_ROOT_ENV: &str = "FICLE_RUN_ROOT";
const DEFAULT_RUN_ROOT: &str = "runs";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Corpus file or split directory.
    pub path: Option<PathBuf>,
}

/// Contents of the `--config` file. Every table is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub run_root: Option<PathBuf>,
    pub data: DataConfig,
    pub train: TrainConfig,
    pub pipeline: PipelineConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Flag, then environment, then config file, then `runs`.
    pub fn run_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(RUN_ROOT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.run_root.clone().unwrap_or_else(|| DEFAULT_RUN_ROOT.into())
    }

    /// Resolves a corpus file from `--data` (or the config) and `--split`.
    /// A directory holds `<split>.jsonl` files.
    pub fn data_file(&self, flag: Option<&Path>, split: Option<&str>, default_split: &str) -> anyhow::Result<PathBuf> {
        let base = flag
            .map(Path::to_path_buf)
            .or_else(|| self.data.path.clone())
            .context("no corpus given: pass --data or set [data] path in the config")?;
        if base.is_dir() {
            Ok(base.join(format!("{}.jsonl", split.unwrap_or(default_split))))
        } else {
            Ok(base)
        }
    }
}
