//! Strategy selectors for the three prediction stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

macro_rules! strategy_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $s),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let key = s.trim().to_lowercase().replace('-', "_");
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == key)
                    .ok_or_else(|| {
                        let names: Vec<&str> = Self::ALL.iter().map(|v| v.as_str()).collect();
                        format!("unknown strategy '{s}', expected one of {}", names.join(", "))
                    })
            }
        }
    };
}

strategy_enum!(
    /// How the inconsistent context span is predicted.
    ExtractionStrategy {
        StructureIgnorant => "structure_ignorant",
        TwoStep => "two_step",
        MultiTask => "multi_task",
        OracleStructure => "oracle_structure",
    }
);

strategy_enum!(
    /// How inconsistency type and claim component are predicted.
    StageBStrategy {
        Individual => "individual",
        TwoStep => "two_step",
        MultiTask => "multi_task",
    }
);

strategy_enum!(
    /// How coarse and fine entity types are predicted.
    StageCStrategy {
        Individual => "individual",
        TwoStep => "two_step",
        IndividualEmbedding => "individual_embedding",
        TwoStepEmbedding => "two_step_embedding",
        TwoStepMix => "two_step_mix",
    }
);

impl ExtractionStrategy {
    /// Whether this strategy yields source/relation/target predictions.
    pub fn predicts_structure(self) -> bool {
        matches!(self, Self::TwoStep | Self::MultiTask)
    }
}

impl StageCStrategy {
    pub fn coarse_uses_embedding(self) -> bool {
        matches!(self, Self::IndividualEmbedding | Self::TwoStepEmbedding | Self::TwoStepMix)
    }

    pub fn fine_uses_embedding(self) -> bool {
        matches!(self, Self::IndividualEmbedding | Self::TwoStepEmbedding)
    }

    /// Fine prediction conditions on the predicted coarse label.
    pub fn fine_uses_coarse(self) -> bool {
        matches!(self, Self::TwoStep | Self::TwoStepEmbedding | Self::TwoStepMix)
    }

    /// Class-name embedding variants need a discriminative encoder.
    pub fn requires_discriminative(self) -> bool {
        self.coarse_uses_embedding() || self.fine_uses_embedding()
    }
}
