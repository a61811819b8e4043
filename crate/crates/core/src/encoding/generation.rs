use serde::{Deserialize, Serialize};

use super::{Section, SpecialTokenScheme};
use crate::corpus::{
    fuzzy_label, ClaimComponent, CoarseEntityType, FineEntityType, FineLabelVocab, InconsistencyType, Label,
};
use crate::error::EncodingError;

/// Output fields a generative model can produce. `None` means the field is
/// not part of the target (or was not found when parsing).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationFields {
    pub source: Option<String>,
    pub relation: Option<String>,
    pub target: Option<String>,
    pub context_span: Option<String>,
    pub component: Option<ClaimComponent>,
    pub itype: Option<InconsistencyType>,
    pub coarse: Option<CoarseEntityType>,
    pub fine: Option<FineEntityType>,
}

impl GenerationFields {
    pub fn is_empty(&self) -> bool {
        self.present().is_empty()
    }

    /// Sections carried by these fields, in canonical order.
    pub fn present(&self) -> Vec<Section> {
        let flags = [
            (Section::Source, self.source.is_some()),
            (Section::Relation, self.relation.is_some()),
            (Section::Target, self.target.is_some()),
            (Section::ContextSpan, self.context_span.is_some()),
            (Section::ClaimComponent, self.component.is_some()),
            (Section::Type, self.itype.is_some()),
            (Section::CoarseEntityType, self.coarse.is_some()),
            (Section::FineEntityType, self.fine.is_some()),
        ];
        flags.into_iter().filter(|(_, p)| *p).map(|(s, _)| s).collect()
    }

    fn text_of(&self, s: Section) -> Option<String> {
        match s {
            Section::Source => self.source.clone(),
            Section::Relation => self.relation.clone(),
            Section::Target => self.target.clone(),
            Section::ContextSpan => self.context_span.clone(),
            Section::ClaimComponent => self.component.map(|c| c.generation_form()),
            Section::Type => self.itype.map(|t| t.generation_form()),
            Section::CoarseEntityType => self.coarse.map(|c| c.name().to_string()),
            Section::FineEntityType => self.fine.as_ref().map(|f| f.as_str().to_string()),
            Section::Claim | Section::Context => None,
        }
    }
}

/// Linearized generation target.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TargetSequence(pub String);

impl TargetSequence {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Emits `marker text` pairs in canonical order; empty text leaves the
/// marker alone.
pub fn build_generation_target(
    fields: &GenerationFields,
    scheme: &SpecialTokenScheme,
) -> Result<TargetSequence, EncodingError> {
    let present = fields.present();
    if present.is_empty() {
        return Err(EncodingError::EmptyTarget);
    }
    let mut parts = Vec::with_capacity(present.len() * 2);
    for s in present {
        parts.push(scheme.marker(s).to_string());
        let text = fields.text_of(s).unwrap_or_default();
        if !text.is_empty() {
            parts.push(text);
        }
    }
    Ok(TargetSequence(parts.join(" ")))
}

/// Problems noticed while parsing a generated string.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseQuality {
    /// Non-blank text before the first marker (ignored).
    pub leading_text: bool,
    /// Markers seen more than once; the first occurrence was kept.
    pub duplicates: Vec<Section>,
    /// Markers not in canonical order.
    pub out_of_order: bool,
    /// Input-only markers (claim, context) found in the output.
    pub unexpected: Vec<Section>,
    /// Label fields resolved by edit distance rather than exact match.
    pub fuzzy: Vec<Section>,
    /// Label fields whose text matched nothing.
    pub unresolved: Vec<Section>,
}

impl ParseQuality {
    pub fn is_clean(&self) -> bool {
        *self == ParseQuality::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedGeneration {
    pub fields: GenerationFields,
    pub quality: ParseQuality,
}

/// Splits `text` on markers, scanning left to right and preferring the
/// longest marker at each position. Fine labels are resolved against
/// `vocab` when one is given, otherwise taken verbatim.
pub fn parse_generation_output(
    text: &str,
    scheme: &SpecialTokenScheme,
    vocab: Option<&FineLabelVocab>,
) -> ParsedGeneration {
    let mut markers: Vec<(&str, Section)> = Section::ALL.iter().map(|&s| (scheme.marker(s), s)).collect();
    markers.sort_by_key(|(m, _)| std::cmp::Reverse(m.len()));

    // (section, byte range of its text)
    let mut segments: Vec<(Section, usize, usize)> = Vec::new();
    let mut first_marker = text.len();
    let mut i = 0;
    while i < text.len() {
        if let Some((m, s)) = markers.iter().find(|(m, _)| text[i..].starts_with(m)) {
            if segments.is_empty() {
                first_marker = i;
            }
            if let Some(last) = segments.last_mut() {
                last.2 = i;
            }
            i += m.len();
            segments.push((*s, i, text.len()));
        } else {
            i += text[i..].chars().next().map_or(1, char::len_utf8);
        }
    }

    let mut quality = ParseQuality {
        leading_text: !text[..first_marker].trim().is_empty(),
        ..Default::default()
    };
    let mut fields = GenerationFields::default();
    let mut seen: Vec<Section> = Vec::new();
    for (section, a, b) in segments {
        if seen.contains(&section) {
            if !quality.duplicates.contains(&section) {
                quality.duplicates.push(section);
            }
            continue;
        }
        if seen.last().is_some_and(|&prev| prev > section) {
            quality.out_of_order = true;
        }
        seen.push(section);
        let value = text[a..b].trim().to_string();
        match section {
            Section::Claim | Section::Context => quality.unexpected.push(section),
            Section::Source => fields.source = Some(value),
            Section::Relation => fields.relation = Some(value),
            Section::Target => fields.target = Some(value),
            Section::ContextSpan => fields.context_span = Some(value),
            Section::ClaimComponent => fields.component = resolve_label(section, &value, &mut quality),
            Section::Type => fields.itype = resolve_label(section, &value, &mut quality),
            Section::CoarseEntityType => fields.coarse = resolve_label(section, &value, &mut quality),
            Section::FineEntityType => {
                fields.fine = match vocab {
                    Some(v) => match v.resolve(&value) {
                        Some((f, fuzzy)) => {
                            if fuzzy {
                                log::warn!("fine label '{value}' resolved to '{f}' by edit distance");
                                quality.fuzzy.push(section);
                            }
                            Some(f)
                        }
                        None => {
                            quality.unresolved.push(section);
                            None
                        }
                    },
                    None if value.is_empty() => {
                        quality.unresolved.push(section);
                        None
                    }
                    None => Some(FineEntityType::new(&value)),
                }
            }
        }
    }
    ParsedGeneration { fields, quality }
}

fn resolve_label<L: Label>(section: Section, value: &str, quality: &mut ParseQuality) -> Option<L> {
    match fuzzy_label::<L>(value) {
        Some((l, fuzzy)) => {
            if fuzzy {
                log::warn!("{section} label '{value}' resolved to '{}' by edit distance", l.name());
                quality.fuzzy.push(section);
            }
            Some(l)
        }
        None => {
            quality.unresolved.push(section);
            None
        }
    }
}
