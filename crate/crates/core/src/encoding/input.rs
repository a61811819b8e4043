use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{HashTokenizer, Section, SpecialTokenScheme};
use crate::corpus::{char_len, char_slice, CharSpan, ClaimComponent, CoarseEntityType, FactTriple, Label};
use crate::error::EncodingError;
use crate::strategy::ExtractionStrategy;

/// Inclusive token interval. The null span points at the summary token and
/// stands for "no span".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSpan {
    pub start: usize,
    pub end: usize,
}

impl TokenSpan {
    pub const NULL: TokenSpan = TokenSpan { start: 0, end: 0 };

    pub fn new(start: usize, end: usize) -> Self {
        TokenSpan { start, end }
    }

    pub fn is_null(&self) -> bool {
        *self == Self::NULL
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn contains(&self, other: &TokenSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

/// Which Stage A input variant is being built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageAPass {
    StructureIgnorant,
    /// Structure prediction step of the two-step strategy.
    TwoStepFirst,
    /// Context-span step of the two-step strategy, fed the predicted triple.
    TwoStepSecond,
    MultiTask,
    OracleStructure,
}

impl StageAPass {
    pub fn requires_structure(self) -> bool {
        matches!(self, Self::TwoStepSecond | Self::OracleStructure)
    }

    /// Passes run by a strategy, in order.
    pub fn for_strategy(strategy: ExtractionStrategy) -> &'static [StageAPass] {
        match strategy {
            ExtractionStrategy::StructureIgnorant => &[Self::StructureIgnorant],
            ExtractionStrategy::TwoStep => &[Self::TwoStepFirst, Self::TwoStepSecond],
            ExtractionStrategy::MultiTask => &[Self::MultiTask],
            ExtractionStrategy::OracleStructure => &[Self::OracleStructure],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSection {
    pub section: Section,
    /// Full source text of the section.
    pub text: String,
    /// Position of the marker token.
    pub marker: usize,
    /// Positions of the content tokens that survived truncation.
    pub tokens: Range<usize>,
    /// Characters of `text` covered by the kept tokens.
    pub kept_chars: usize,
    pub truncated: bool,
}

/// Token ids plus the alignment back to section text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub sections: Vec<EncodedSection>,
    /// Character range of each token within its section text; (0, 0) for
    /// the summary token and markers.
    pub offsets: Vec<(usize, usize)>,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn truncated(&self) -> bool {
        self.sections.iter().any(|s| s.truncated)
    }

    pub fn section(&self, s: Section) -> Option<&EncodedSection> {
        self.sections.iter().find(|x| x.section == s)
    }

    /// Section owning the token at `pos`, markers included.
    pub fn section_at(&self, pos: usize) -> Option<Section> {
        self.sections
            .iter()
            .find(|s| s.marker == pos || s.tokens.contains(&pos))
            .map(|s| s.section)
    }

    /// Content tokens of a section as an inclusive span.
    pub fn legal_region(&self, s: Section) -> Option<TokenSpan> {
        let sec = self.section(s)?;
        (!sec.tokens.is_empty()).then(|| TokenSpan::new(sec.tokens.start, sec.tokens.end - 1))
    }

    /// Smallest token interval covering every character of `span`.
    pub fn char_span_to_token_span(&self, span: &CharSpan, section: Section) -> Result<TokenSpan, EncodingError> {
        if span.is_empty() {
            return Ok(TokenSpan::NULL);
        }
        let sec = self.section(section).ok_or(EncodingError::MissingSection(section))?;
        let len = char_len(&sec.text);
        if span.start >= span.end || span.end > len {
            return Err(EncodingError::SpanOutsideSection {
                section,
                start: span.start,
                end: span.end,
                len,
            });
        }
        if sec.truncated && span.end > sec.kept_chars {
            return Err(EncodingError::SpanTruncated {
                section,
                start: span.start,
                end: span.end,
            });
        }
        let mut hit = sec
            .tokens
            .clone()
            .filter(|&p| self.offsets[p].1 > span.start && self.offsets[p].0 < span.end);
        let first = hit.next();
        let last = hit.last().or(first);
        match (first, last) {
            (Some(a), Some(b)) => Ok(TokenSpan::new(a, b)),
            _ => Err(EncodingError::NoTokens {
                section,
                start: span.start,
                end: span.end,
            }),
        }
    }

    /// Character span of the section text covered by a token interval. The
    /// null span maps to the empty span.
    pub fn token_span_to_char_span(&self, ts: TokenSpan, section: Section) -> Option<CharSpan> {
        if ts.is_null() {
            return Some(CharSpan::empty());
        }
        let sec = self.section(section)?;
        if ts.start > ts.end || !sec.tokens.contains(&ts.start) || !sec.tokens.contains(&ts.end) {
            return None;
        }
        CharSpan::new(&sec.text, self.offsets[ts.start].0, self.offsets[ts.end].1)
    }

    /// Human-readable form: summary token, then each marker followed by the
    /// kept section text.
    pub fn render(&self, scheme: &SpecialTokenScheme) -> String {
        let mut parts = vec![scheme.summary.clone()];
        for s in &self.sections {
            parts.push(scheme.marker(s.section).to_string());
            let kept = char_slice(&s.text, 0, s.kept_chars).unwrap_or_default().trim();
            if !kept.is_empty() {
                parts.push(kept.to_string());
            }
        }
        parts.join(" ")
    }
}

/// Builds model inputs for each stage under a token budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputEncoder {
    tokenizer: HashTokenizer,
    scheme: SpecialTokenScheme,
    max_len: usize,
}

impl InputEncoder {
    pub fn new(tokenizer: HashTokenizer, scheme: SpecialTokenScheme, max_len: usize) -> Result<Self, EncodingError> {
        scheme.validate()?;
        Ok(InputEncoder {
            tokenizer,
            scheme,
            max_len,
        })
    }

    pub fn tokenizer(&self) -> &HashTokenizer {
        &self.tokenizer
    }

    pub fn scheme(&self) -> &SpecialTokenScheme {
        &self.scheme
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Encodes sections in the given order. When over budget, context
    /// tokens are dropped from the right; no other section is cut.
    pub fn encode_sections(&self, sections: &[(Section, &str)]) -> Result<EncodedInput, EncodingError> {
        let pieces: Vec<_> = sections.iter().map(|(_, t)| self.tokenizer.pieces(t)).collect();
        let needed = 1 + sections.len() + pieces.iter().map(Vec::len).sum::<usize>();
        let mut keep: Vec<usize> = pieces.iter().map(Vec::len).collect();
        if needed > self.max_len {
            let mut excess = needed - self.max_len;
            if let Some(i) = sections.iter().position(|(s, _)| *s == Section::Context) {
                let cut = excess.min(keep[i]);
                keep[i] -= cut;
                excess -= cut;
            }
            if excess > 0 {
                return Err(EncodingError::TooLong {
                    needed,
                    budget: self.max_len,
                });
            }
        }

        let mut ids = vec![HashTokenizer::SUMMARY];
        let mut offsets = vec![(0, 0)];
        let mut out_sections = Vec::with_capacity(sections.len());
        for (((section, text), pieces), &kept) in sections.iter().zip(&pieces).zip(&keep) {
            let marker = ids.len();
            ids.push(self.tokenizer.marker_id(*section));
            offsets.push((0, 0));
            let first = ids.len();
            for p in &pieces[..kept] {
                ids.push(p.id);
                offsets.push((p.start, p.end));
            }
            let truncated = kept < pieces.len();
            out_sections.push(EncodedSection {
                section: *section,
                text: text.to_string(),
                marker,
                tokens: first..ids.len(),
                kept_chars: if truncated {
                    pieces[..kept].last().map_or(0, |p| p.end)
                } else {
                    char_len(text)
                },
                truncated,
            });
        }
        Ok(EncodedInput {
            ids,
            sections: out_sections,
            offsets,
        })
    }

    /// `[summary] <claim> C <context> X`, plus the triple sections when the
    /// pass consumes structure.
    pub fn stage_a(
        &self,
        claim: &str,
        context: &str,
        pass: StageAPass,
        srt: Option<&FactTriple>,
    ) -> Result<EncodedInput, EncodingError> {
        let mut sections = vec![(Section::Claim, claim), (Section::Context, context)];
        if pass.requires_structure() {
            let t = srt.ok_or(EncodingError::MissingStructure)?;
            sections.extend([
                (Section::Source, t.source.text.as_str()),
                (Section::Relation, t.relation.text.as_str()),
                (Section::Target, t.target.text.as_str()),
            ]);
        }
        self.encode_sections(&sections)
    }

    /// Claim, context, triple and context span, with the claim component
    /// appended when given.
    pub fn stage_b(
        &self,
        claim: &str,
        context: &str,
        srt: &FactTriple,
        cspan: &CharSpan,
        component: Option<ClaimComponent>,
    ) -> Result<EncodedInput, EncodingError> {
        let label = component.map(|c| c.generation_form());
        let mut sections = vec![
            (Section::Claim, claim),
            (Section::Context, context),
            (Section::Source, srt.source.text.as_str()),
            (Section::Relation, srt.relation.text.as_str()),
            (Section::Target, srt.target.text.as_str()),
            (Section::ContextSpan, cspan.text.as_str()),
        ];
        if let Some(label) = &label {
            sections.push((Section::ClaimComponent, label));
        }
        self.encode_sections(&sections)
    }

    /// Context span and the claim span named by the component, with the
    /// coarse label appended when given.
    pub fn stage_c(
        &self,
        cspan: &CharSpan,
        claim_span: &CharSpan,
        coarse: Option<CoarseEntityType>,
    ) -> Result<EncodedInput, EncodingError> {
        let mut sections = vec![
            (Section::ContextSpan, cspan.text.as_str()),
            (Section::ClaimComponent, claim_span.text.as_str()),
        ];
        if let Some(c) = coarse {
            sections.push((Section::CoarseEntityType, c.name()));
        }
        self.encode_sections(&sections)
    }

    /// Unmarked single input, e.g. a class name: summary token then words.
    pub fn plain(&self, text: &str) -> EncodedInput {
        let pieces = self.tokenizer.pieces(text);
        let mut ids = vec![HashTokenizer::SUMMARY];
        let mut offsets = vec![(0, 0)];
        for p in pieces.iter().take(self.max_len.saturating_sub(1)) {
            ids.push(p.id);
            offsets.push((p.start, p.end));
        }
        EncodedInput {
            ids,
            sections: Vec::new(),
            offsets,
        }
    }
}
