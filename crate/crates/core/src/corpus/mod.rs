//! Annotated claim/context samples: data model, JSONL loading, validation,
//! splitting, descriptive statistics and the fine label vocabulary.

mod io;
mod labels;
mod split;
mod stats;
pub mod synthetic;
mod validate;
mod vocab;

use serde::{Deserialize, Serialize};

pub use io::{load_corpus, parse_corpus, read_corpus, sample_to_json, write_corpus};
pub use labels::{
    fuzzy_label, ClaimComponent, CoarseEntityType, FineEntityType, InconsistencyType, Label,
    TripleSlot,
};
pub use split::{split_corpus, split_corpus_with, Split, SplitMode};
pub use stats::{compute_stats, word_count, CorpusStats, LengthStats};
pub use validate::{normalize_sample, partition_valid, validate_sample, Quarantined, Violation};
pub use vocab::{build_fine_label_vocab, FineLabelVocab};

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Substring of `s` between character offsets `[start, end)`.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    let finish = if end == start {
        begin
    } else {
        indices.nth(end - start - 1)?
    };
    Some(&s[begin..finish])
}

/// A span of a host sentence in character offsets, with its surface text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl CharSpan {
    pub const EMPTY: CharSpan = CharSpan {
        start: 0,
        end: 0,
        text: String::new(),
    };

    /// Span of `host` at `[start, end)`, or `None` when out of range or inverted.
    pub fn new(host: &str, start: usize, end: usize) -> Option<CharSpan> {
        if start == end {
            return (start == 0).then(CharSpan::empty);
        }
        let text = char_slice(host, start, end)?;
        Some(CharSpan {
            start,
            end,
            text: text.to_string(),
        })
    }

    pub fn empty() -> CharSpan {
        CharSpan::EMPTY
    }

    /// First occurrence of `text` in `host`.
    pub fn locate(host: &str, text: &str) -> Option<CharSpan> {
        if text.is_empty() {
            return Some(CharSpan::empty());
        }
        let byte = host.find(text)?;
        let start = char_len(&host[..byte]);
        Some(CharSpan {
            start,
            end: start + char_len(text),
            text: text.to_string(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.start == 0 && self.end == 0 && self.text.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.start)
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        other.is_empty() || (self.start <= other.start && other.end <= self.end)
    }

    /// True when offsets and text agree with `host`.
    pub fn matches_host(&self, host: &str) -> bool {
        if self.is_empty() {
            return true;
        }
        self.start < self.end && char_slice(host, self.start, self.end) == Some(self.text.as_str())
    }
}

/// The claim's inconsistent fact: source, relation and target spans, each
/// optionally split into head and modifier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactTriple {
    pub source: CharSpan,
    pub relation: CharSpan,
    pub target: CharSpan,
    pub source_head: Option<CharSpan>,
    pub source_modifier: Option<CharSpan>,
    pub relation_head: Option<CharSpan>,
    pub relation_modifier: Option<CharSpan>,
    pub target_head: Option<CharSpan>,
    pub target_modifier: Option<CharSpan>,
}

impl FactTriple {
    pub fn new(source: CharSpan, relation: CharSpan, target: CharSpan) -> Self {
        FactTriple {
            source,
            relation,
            target,
            source_head: None,
            source_modifier: None,
            relation_head: None,
            relation_modifier: None,
            target_head: None,
            target_modifier: None,
        }
    }

    pub fn slot(&self, slot: TripleSlot) -> &CharSpan {
        match slot {
            TripleSlot::Source => &self.source,
            TripleSlot::Relation => &self.relation,
            TripleSlot::Target => &self.target,
        }
    }

    pub fn sub_span(&self, component: ClaimComponent) -> Option<&CharSpan> {
        use ClaimComponent::*;
        match component {
            SubjectHead => self.source_head.as_ref(),
            SubjectModifier => self.source_modifier.as_ref(),
            RelationHead => self.relation_head.as_ref(),
            RelationModifier => self.relation_modifier.as_ref(),
            TargetHead => self.target_head.as_ref(),
            TargetModifier => self.target_modifier.as_ref(),
        }
    }

    pub fn sub_span_mut(&mut self, component: ClaimComponent) -> &mut Option<CharSpan> {
        use ClaimComponent::*;
        match component {
            SubjectHead => &mut self.source_head,
            SubjectModifier => &mut self.source_modifier,
            RelationHead => &mut self.relation_head,
            RelationModifier => &mut self.relation_modifier,
            TargetHead => &mut self.target_head,
            TargetModifier => &mut self.target_modifier,
        }
    }

    /// Claim-side span for a component: the labelled sub-span when present,
    /// otherwise the whole slot span.
    pub fn component_span(&self, component: ClaimComponent) -> &CharSpan {
        self.sub_span(component)
            .unwrap_or_else(|| self.slot(component.slot()))
    }
}

/// One annotated (claim, context) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub claim: String,
    pub context: String,
    pub triple: FactTriple,
    pub incon_context_span: CharSpan,
    pub component: ClaimComponent,
    pub itype: InconsistencyType,
    pub coarse: Option<CoarseEntityType>,
    pub fine: Option<FineEntityType>,
}

impl Sample {
    /// Entity labels when both are present.
    pub fn entity_types(&self) -> Option<(CoarseEntityType, &FineEntityType)> {
        match (&self.coarse, &self.fine) {
            (Some(c), Some(f)) => Some((*c, f)),
            _ => None,
        }
    }

    pub fn claim_component_span(&self) -> &CharSpan {
        self.triple.component_span(self.component)
    }
}
