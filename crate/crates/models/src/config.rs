use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ModelError, Result};
use crate::family::CheckpointFamily;

/// Shape of the small transformer encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Number of learned positions; inputs never exceed it.
    pub max_positions: usize,
    /// Hash buckets of the word tokenizer.
    pub buckets: u32,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: 64,
            layers: 2,
            heads: 4,
            ffn: 128,
            max_positions: 128,
            buckets: 16_384,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub checkpoint_family: CheckpointFamily,
    pub batch_size: usize,
    pub epochs: usize,
    /// `None` picks the family default.
    pub learning_rate: Option<f64>,
    pub seed: u64,
    pub max_sequence_length: usize,
    pub optimizer: String,
    pub weight_decay: f64,
    /// Keep last-epoch weights instead of the best validation epoch.
    pub select_last: bool,
    /// Longest decoded source/relation/target span, in tokens.
    pub max_span_tokens: usize,
    /// Longest decoded context span, in tokens.
    pub max_context_span_tokens: usize,
    /// Margin of the cosine embedding objective.
    pub cosine_margin: f64,
    /// Inverse-frequency class weights in cross-entropy.
    pub class_weighting: bool,
    pub encoder: EncoderConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            checkpoint_family: CheckpointFamily::TinyEncoder,
            batch_size: 16,
            epochs: 5,
            learning_rate: None,
            seed: 42,
            max_sequence_length: 128,
            optimizer: "adamw".into(),
            weight_decay: 0.01,
            select_last: false,
            max_span_tokens: 20,
            max_context_span_tokens: 30,
            cosine_margin: 0.0,
            class_weighting: false,
            encoder: EncoderConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn effective_learning_rate(&self) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| self.checkpoint_family.default_learning_rate())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        let lr = self.effective_learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !self.optimizer.eq_ignore_ascii_case("adamw") {
            return bad("only the adamw optimizer is supported");
        }
        if self.max_sequence_length < 4 || self.max_sequence_length > self.encoder.max_positions {
            return bad("max_sequence_length must be in [4, encoder.max_positions]");
        }
        if self.max_span_tokens == 0 || self.max_context_span_tokens == 0 {
            return bad("span length limits must be positive");
        }
        let e = &self.encoder;
        if e.hidden == 0 || e.heads == 0 || e.hidden % e.heads != 0 || e.layers == 0 || e.ffn == 0 || e.buckets == 0 {
            return bad("encoder hidden size must be a positive multiple of heads; layers, ffn and buckets positive");
        }
        Ok(())
    }

    /// Resolves and checks that the family can be built.
    pub fn ensure_constructible(&self) -> Result<()> {
        self.validate()?;
        if !self.checkpoint_family.is_constructible() {
            return Err(ModelError::FamilyUnavailable(self.checkpoint_family.to_string()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
