//! Model input and output serialization.
//!
//! Inputs are sequences of marked sections (`<claim> ... <context> ...`)
//! behind a summary token; each section keeps its source text so spans can
//! be moved between character offsets and token positions. Generative
//! targets use the same markers to linearize structured outputs.

mod generation;
mod input;
mod tokenizer;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use generation::{build_generation_target, parse_generation_output, GenerationFields, ParseQuality, ParsedGeneration, TargetSequence};
pub use input::{EncodedInput, EncodedSection, InputEncoder, StageAPass, TokenSpan};
pub use tokenizer::{word_offsets, HashTokenizer, Piece, TokenizerConfig};

use crate::error::EncodingError;

/// A marked section of a model input or generation target, in canonical
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Claim,
    Context,
    Source,
    Relation,
    Target,
    ContextSpan,
    ClaimComponent,
    Type,
    CoarseEntityType,
    FineEntityType,
}

impl Section {
    pub const ALL: [Section; 10] = [
        Section::Claim,
        Section::Context,
        Section::Source,
        Section::Relation,
        Section::Target,
        Section::ContextSpan,
        Section::ClaimComponent,
        Section::Type,
        Section::CoarseEntityType,
        Section::FineEntityType,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

/// Surface strings of the section markers and the summary token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecialTokenScheme {
    pub summary: String,
    pub claim: String,
    pub context: String,
    pub source: String,
    pub relation: String,
    pub target: String,
    pub context_span: String,
    pub claim_component: String,
    pub type_: String,
    pub coarse_entity_type: String,
    pub fine_entity_type: String,
}

impl Default for SpecialTokenScheme {
    fn default() -> Self {
        SpecialTokenScheme {
            summary: "[CLS]".into(),
            claim: "<claim>".into(),
            context: "<context>".into(),
            source: "<source>".into(),
            relation: "<relation>".into(),
            target: "<target>".into(),
            context_span: "<contextSpan>".into(),
            claim_component: "<claimComponent>".into(),
            type_: "<type>".into(),
            coarse_entity_type: "<coarseEntityType>".into(),
            fine_entity_type: "<fineEntityType>".into(),
        }
    }
}

impl SpecialTokenScheme {
    /// Scheme for generative checkpoints: no summary token and bracketed
    /// literals that survive sentinel-based tokenizers.
    pub fn generative() -> Self {
        SpecialTokenScheme {
            summary: "<s>".into(),
            ..Default::default()
        }
    }

    pub fn marker(&self, s: Section) -> &str {
        match s {
            Section::Claim => &self.claim,
            Section::Context => &self.context,
            Section::Source => &self.source,
            Section::Relation => &self.relation,
            Section::Target => &self.target,
            Section::ContextSpan => &self.context_span,
            Section::ClaimComponent => &self.claim_component,
            Section::Type => &self.type_,
            Section::CoarseEntityType => &self.coarse_entity_type,
            Section::FineEntityType => &self.fine_entity_type,
        }
    }

    /// Markers and summary token must be non-empty, whitespace-free and
    /// pairwise distinct.
    pub fn validate(&self) -> Result<(), EncodingError> {
        let all: Vec<&str> = std::iter::once(self.summary.as_str())
            .chain(Section::ALL.iter().map(|&s| self.marker(s)))
            .collect();
        let unique: HashSet<&str> = all.iter().copied().collect();
        if unique.len() != all.len() || all.iter().any(|m| m.is_empty() || m.chars().any(char::is_whitespace)) {
            return Err(EncodingError::InvalidScheme);
        }
        Ok(())
    }
}
