//! Checkpoint directories: weights, manifest and optional class table.

use std::fs;
use std::path::{Path, PathBuf};

use candle_core::Device;
use ficle_core::encoding::{HashTokenizer, InputEncoder, SpecialTokenScheme, StageAPass, TokenizerConfig};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::entity_typer::ClassEmbeddingTable;
use crate::error::{io_err, ModelError, Result};
use crate::family::CheckpointFamily;
use crate::network::{Network, NetworkSpec};
use crate::params::ParamStore;
use crate::span_extractor::SpanField;
use crate::train::Selection;

pub const FORMAT_VERSION: u32 = 1;
pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CLASS_TABLE_FILE: &str = "class_table.safetensors";
pub const BUNDLE_FILE: &str = "model.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageId {
    A,
    B,
    C,
}

impl StageId {
    pub fn as_str(self) -> &'static str {
        match self {
            StageId::A => "a",
            StageId::B => "b",
            StageId::C => "c",
        }
    }
}

impl std::fmt::Display for StageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StageId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "a" => Ok(StageId::A),
            "b" => Ok(StageId::B),
            "c" => Ok(StageId::C),
            _ => Err(format!("unknown stage '{s}', expected a, b or c")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageBHead {
    Type,
    Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityLevel {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    CrossEntropy,
    Cosine,
}

/// What a checkpoint's network computes and which input it expects.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Role {
    Span {
        pass: StageAPass,
        fields: Vec<SpanField>,
    },
    Classify {
        heads: Vec<StageBHead>,
        with_component: bool,
    },
    Entity {
        level: EntityLevel,
        objective: Objective,
        with_coarse: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub name: String,
    pub stage: StageId,
    pub strategy: String,
    pub role: Role,
    pub family: CheckpointFamily,
    pub scheme: SpecialTokenScheme,
    pub tokenizer: TokenizerConfig,
    pub max_sequence_length: usize,
    pub network: NetworkSpec,
    /// Label order of each classification head, or of the class table.
    pub labels: Vec<Vec<String>>,
    /// How class-name vectors were pooled, when a table is present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_table_pooling: Option<String>,
    pub seed: u64,
    pub train_config: TrainConfig,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_hash: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<Selection>,
    pub train_examples: usize,
    pub excluded_examples: usize,
}

impl Manifest {
    pub fn new(name: &str, stage: StageId, strategy: &str, role: Role, network: NetworkSpec, cfg: &TrainConfig) -> Self {
        Manifest {
            format_version: FORMAT_VERSION,
            name: name.to_string(),
            stage,
            strategy: strategy.to_string(),
            role,
            family: cfg.checkpoint_family,
            scheme: SpecialTokenScheme::default(),
            tokenizer: TokenizerConfig {
                buckets: network.encoder.buckets,
            },
            max_sequence_length: cfg.max_sequence_length,
            network,
            labels: Vec::new(),
            class_table_pooling: None,
            seed: cfg.seed,
            train_config: cfg.clone(),
            config_hash: cfg.hash(),
            dataset_hash: None,
            selection: None,
            train_examples: 0,
            excluded_examples: 0,
        }
    }
}

/// A network together with its parameters and manifest.
pub struct Checkpoint {
    pub manifest: Manifest,
    pub params: ParamStore,
    pub network: Network,
    pub class_table: Option<ClassEmbeddingTable>,
}

impl Checkpoint {
    /// Freshly initialised weights from the manifest seed.
    pub fn init(manifest: Manifest) -> Result<Self> {
        if !manifest.family.is_constructible() {
            return Err(ModelError::FamilyUnavailable(manifest.family.to_string()));
        }
        let mut params = ParamStore::new(manifest.seed, Device::Cpu);
        let network = Network::new(&mut params, manifest.network.clone())?;
        Ok(Checkpoint {
            manifest,
            params,
            network,
            class_table: None,
        })
    }

    pub fn input_encoder(&self) -> Result<InputEncoder> {
        Ok(InputEncoder::new(
            HashTokenizer::new(self.manifest.tokenizer),
            self.manifest.scheme.clone(),
            self.manifest.max_sequence_length,
        )?)
    }

    /// Writes into `dir`, replacing any previous contents atomically.
    pub fn save(&self, dir: &Path) -> Result<()> {
        write_dir_atomic(dir, |tmp| {
            self.params.save(&tmp.join(WEIGHTS_FILE))?;
            if let Some(t) = &self.class_table {
                t.save(&tmp.join(CLASS_TABLE_FILE))?;
            }
            write_json(&tmp.join(MANIFEST_FILE), &self.manifest)
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(ModelError::BadCheckpoint {
                path: dir.to_path_buf(),
                message: format!("unsupported format version {}", manifest.format_version),
            });
        }
        let mut ck = Checkpoint::init(manifest)?;
        ck.params.load(&dir.join(WEIGHTS_FILE))?;
        let table_path = dir.join(CLASS_TABLE_FILE);
        if table_path.exists() {
            ck.class_table = Some(ClassEmbeddingTable::load(&table_path)?);
        }
        Ok(ck)
    }
}

/// Stage-level index of the checkpoints a strategy trained, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageBundle {
    pub format_version: u32,
    pub stage: StageId,
    pub strategy: String,
    pub family: CheckpointFamily,
    pub checkpoints: Vec<String>,
}

impl StageBundle {
    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(BUNDLE_FILE))
    }
}

/// Saves a bundle of checkpoints as subdirectories of `dir`.
pub fn save_bundle(dir: &Path, stage: StageId, strategy: &str, checkpoints: &[&Checkpoint]) -> Result<()> {
    let family = checkpoints
        .first()
        .map(|c| c.manifest.family)
        .ok_or_else(|| ModelError::Other("bundle without checkpoints".into()))?;
    write_dir_atomic(dir, |tmp| {
        for c in checkpoints {
            c.save(&tmp.join(&c.manifest.name))?;
        }
        let bundle = StageBundle {
            format_version: FORMAT_VERSION,
            stage,
            strategy: strategy.to_string(),
            family,
            checkpoints: checkpoints.iter().map(|c| c.manifest.name.clone()).collect(),
        };
        write_json(&tmp.join(BUNDLE_FILE), &bundle)
    })
}

/// Loads every checkpoint named in the bundle index, in order.
pub fn load_bundle(dir: &Path, stage: StageId) -> Result<(StageBundle, Vec<Checkpoint>)> {
    let bundle = StageBundle::read(dir)?;
    if bundle.stage != stage {
        return Err(ModelError::StrategyMismatch(format!(
            "{} holds a stage {} model, expected stage {stage}",
            dir.display(),
            bundle.stage
        )));
    }
    let cks = bundle
        .checkpoints
        .iter()
        .map(|n| Checkpoint::load(&dir.join(n)))
        .collect::<Result<Vec<_>>>()?;
    Ok((bundle, cks))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| ModelError::Other(e.to_string()))?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|e| ModelError::BadCheckpoint {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes to a temporary sibling, then renames over `path`.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = tmp_sibling(path);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn tmp_sibling(path: &Path) -> PathBuf {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp-{}", std::process::id()))
}

/// Populates a temporary directory, then swaps it into place.
pub fn write_dir_atomic(dir: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if let Some(parent) = dir.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = tmp_sibling(dir);
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(io_err(&tmp))?;
    }
    fs::create_dir_all(&tmp).map_err(io_err(&tmp))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::rename(&tmp, dir).map_err(io_err(dir))
}
