use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Pretrained model family a checkpoint derives from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckpointFamily {
    Bert,
    Roberta,
    Deberta,
    Bart,
    T5,
    /// Small randomly initialised transformer encoder with span and
    /// classification heads.
    TinyEncoder,
}

impl CheckpointFamily {
    pub const ALL: [CheckpointFamily; 6] = [
        Self::Bert,
        Self::Roberta,
        Self::Deberta,
        Self::Bart,
        Self::T5,
        Self::TinyEncoder,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bert => "bert",
            Self::Roberta => "roberta",
            Self::Deberta => "deberta",
            Self::Bart => "bart",
            Self::T5 => "t5",
            Self::TinyEncoder => "tiny-encoder",
        }
    }

    /// Encoder-decoder families that emit linearized outputs.
    pub fn is_generative(self) -> bool {
        matches!(self, Self::Bart | Self::T5)
    }

    pub fn default_learning_rate(self) -> f64 {
        if self.is_generative() {
            1e-4
        } else {
            1e-5
        }
    }

    /// Whether weights for this family can be built in-process.
    pub fn is_constructible(self) -> bool {
        matches!(self, Self::TinyEncoder)
    }
}

impl fmt::Display for CheckpointFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CheckpointFamily {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_lowercase().replace('_', "-");
        let key = match key.as_str() {
            "bert-base" | "bert-base-uncased" => "bert",
            "roberta-base" => "roberta",
            "deberta-base" | "deberta-v3" => "deberta",
            "bart-base" => "bart",
            "t5-base" => "t5",
            "tiny" => "tiny-encoder",
            k => k,
        };
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.as_str() == key)
            .ok_or_else(|| format!("unknown checkpoint family '{s}'"))
    }
}
