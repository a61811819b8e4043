use std::fmt;

use serde::Serialize;

use super::{char_len, char_slice, CharSpan, ClaimComponent, Label, Sample};

/// One broken invariant: which field and which rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

fn sub_span_field(c: ClaimComponent) -> &'static str {
    match c {
        ClaimComponent::SubjectHead => "source_head",
        ClaimComponent::SubjectModifier => "source_modifier",
        ClaimComponent::RelationHead => "relation_head",
        ClaimComponent::RelationModifier => "relation_modifier",
        ClaimComponent::TargetHead => "target_head",
        ClaimComponent::TargetModifier => "target_modifier",
    }
}

fn check_span(out: &mut Vec<Violation>, field: &str, span: &CharSpan, host: &str, allow_empty: bool) {
    if span.is_empty() {
        if !allow_empty {
            out.push(Violation::new(field, "span must not be empty"));
        }
        return;
    }
    if span.start >= span.end {
        out.push(Violation::new(
            field,
            format!("start {} must precede end {}", span.start, span.end),
        ));
        return;
    }
    if span.text.is_empty() {
        out.push(Violation::new(field, "non-empty offsets with empty text"));
        return;
    }
    match char_slice(host, span.start, span.end) {
        None => out.push(Violation::new(
            field,
            format!(
                "offsets [{}, {}) exceed host length {}",
                span.start,
                span.end,
                char_len(host)
            ),
        )),
        Some(t) if t != span.text => out.push(Violation::new(
            field,
            format!("text '{}' does not match host substring '{}'", span.text, t),
        )),
        Some(_) => {}
    }
}

/// Lists every broken invariant of a sample; empty when the sample is valid.
pub fn validate_sample(s: &Sample) -> Vec<Violation> {
    let mut out = Vec::new();
    if s.claim.trim().is_empty() {
        out.push(Violation::new("claim", "must not be empty"));
    }
    if s.context.trim().is_empty() {
        out.push(Violation::new("context", "must not be empty"));
    }
    let t = &s.triple;
    check_span(&mut out, "source", &t.source, &s.claim, false);
    check_span(&mut out, "relation", &t.relation, &s.claim, false);
    check_span(&mut out, "target", &t.target, &s.claim, true);
    for &c in ClaimComponent::ALL {
        if let Some(sub) = t.sub_span(c) {
            let field = sub_span_field(c);
            check_span(&mut out, field, sub, &s.claim, true);
            let parent = t.slot(c.slot());
            if !parent.contains(sub) {
                out.push(Violation::new(
                    field,
                    format!(
                        "[{}, {}) lies outside its parent span [{}, {})",
                        sub.start, sub.end, parent.start, parent.end
                    ),
                ));
            }
        }
    }
    check_span(&mut out, "incon_context_span", &s.incon_context_span, &s.context, false);
    match (s.coarse.is_some(), s.fine.is_some()) {
        (true, false) => out.push(Violation::new(
            "fine_entity_type",
            "coarse entity type is set but fine entity type is absent",
        )),
        (false, true) => out.push(Violation::new(
            "coarse_entity_type",
            "fine entity type is set but coarse entity type is absent",
        )),
        _ => {}
    }
    out
}

/// Repairs a span whose text and offsets disagree: trims surrounding
/// whitespace and re-anchors the text to its occurrence closest to the
/// stated start. Returns a note when something changed.
fn repair_span(span: &mut CharSpan, host: &str) -> Option<String> {
    if span.is_empty() || span.matches_host(host) && span.text.trim() == span.text {
        return None;
    }
    let trimmed = span.text.trim().to_string();
    if trimmed.is_empty() {
        *span = CharSpan::empty();
        return Some("blank span replaced by EMPTY".to_string());
    }
    // All occurrences in char offsets.
    let mut best: Option<usize> = None;
    let mut from = 0;
    while let Some(pos) = host[from..].find(trimmed.as_str()) {
        let byte = from + pos;
        let c = char_len(&host[..byte]);
        if best.is_none_or(|b: usize| c.abs_diff(span.start) < b.abs_diff(span.start)) {
            best = Some(c);
        }
        from = byte + trimmed.chars().next().map_or(1, char::len_utf8);
    }
    let start = best?;
    let before = (span.start, span.end);
    *span = CharSpan {
        start,
        end: start + char_len(&trimmed),
        text: trimmed.clone(),
    };
    Some(format!(
        "re-anchored '{}' from [{}, {}) to [{}, {})",
        trimmed, before.0, before.1, span.start, span.end
    ))
}

/// Applies loader normalization; returns the repaired sample and notes on
/// what was changed.
pub fn normalize_sample(s: &Sample) -> (Sample, Vec<String>) {
    let mut out = s.clone();
    let mut notes = Vec::new();
    let claim = out.claim.clone();
    let mut note = |field: &str, n: Option<String>| {
        if let Some(n) = n {
            notes.push(format!("{field}: {n}"));
        }
    };
    note("source", repair_span(&mut out.triple.source, &claim));
    note("relation", repair_span(&mut out.triple.relation, &claim));
    note("target", repair_span(&mut out.triple.target, &claim));
    for &c in ClaimComponent::ALL {
        if let Some(sub) = out.triple.sub_span_mut(c).as_mut() {
            note(sub_span_field(c), repair_span(sub, &claim));
        }
    }
    let context = out.context.clone();
    note("incon_context_span", repair_span(&mut out.incon_context_span, &context));
    (out, notes)
}

/// A sample held back because it still violates invariants after
/// normalization.
#[derive(Debug, Clone, Serialize)]
pub struct Quarantined {
    pub id: String,
    pub violations: Vec<Violation>,
    pub repairs: Vec<String>,
}

/// Normalizes every sample and separates the clean ones from those that
/// remain invalid. Nothing is dropped silently: every rejected sample is
/// returned with its violations.
pub fn partition_valid(samples: &[Sample]) -> (Vec<Sample>, Vec<Quarantined>, usize) {
    let mut clean = Vec::with_capacity(samples.len());
    let mut quarantined = Vec::new();
    let mut repaired = 0;
    for s in samples {
        let (n, repairs) = normalize_sample(s);
        if !repairs.is_empty() {
            repaired += 1;
        }
        let violations = validate_sample(&n);
        if violations.is_empty() {
            clean.push(n);
        } else {
            quarantined.push(Quarantined {
                id: n.id.clone(),
                violations,
                repairs,
            });
        }
    }
    (clean, quarantined, repaired)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{CoarseEntityType, FactTriple, FineEntityType, InconsistencyType};

    /// First row of the syntactic example table.
    fn table_row() -> Sample {
        let claim = "Prime Minister Swami Vivekananda enthusiastically hoisted the Indian flag.";
        let context = "Prime Minister Narendra Modi enthusiastically hoisted the Indian flag.";
        let loc = |h: &str, t: &str| CharSpan::locate(h, t).unwrap();
        let mut triple = FactTriple::new(
            loc(claim, "Prime Minister Swami Vivekananda"),
            loc(claim, "enthusiastically hoisted"),
            loc(claim, "the Indian flag"),
        );
        triple.source_head = Some(loc(claim, "Swami Vivekananda"));
        triple.source_modifier = Some(loc(claim, "Prime Minister"));
        Sample {
            id: "row1".into(),
            claim: claim.into(),
            context: context.into(),
            triple,
            incon_context_span: loc(context, "Narendra Modi"),
            component: ClaimComponent::SubjectHead,
            itype: InconsistencyType::TaxonomicRelations,
            coarse: Some(CoarseEntityType::Name),
            fine: Some(FineEntityType::new("politician")),
        }
    }

    #[test]
    fn well_formed_row_is_valid() {
        assert_eq!(validate_sample(&table_row()), vec![]);
    }

    #[test]
    fn coarse_without_fine() {
        let mut s = table_row();
        s.fine = None;
        let v = validate_sample(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "fine_entity_type");
    }

    #[test]
    fn context_text_mismatch() {
        let mut s = table_row();
        s.incon_context_span.text = "Narendra Mody".into();
        let v = validate_sample(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "incon_context_span");
    }

    #[test]
    fn sub_span_outside_parent() {
        let mut s = table_row();
        s.triple.relation_head = CharSpan::locate(&s.claim.clone(), "flag");
        let v = validate_sample(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "relation_head");
    }

    #[test]
    fn empty_target_is_allowed() {
        let mut s = table_row();
        s.triple.target = CharSpan::empty();
        assert!(validate_sample(&s).is_empty());
    }

    #[test]
    fn normalization_reanchors_shifted_offsets() {
        let mut s = table_row();
        s.incon_context_span.start += 2;
        s.incon_context_span.end += 2;
        assert_eq!(validate_sample(&s).len(), 1);
        let (fixed, notes) = normalize_sample(&s);
        assert_eq!(notes.len(), 1);
        assert!(validate_sample(&fixed).is_empty());
        assert_eq!(fixed.incon_context_span, table_row().incon_context_span);
    }

    #[test]
    fn normalization_trims_whitespace() {
        let mut s = table_row();
        let span = &mut s.incon_context_span;
        span.start -= 1;
        span.text = format!(" {}", span.text);
        let (fixed, _) = normalize_sample(&s);
        assert_eq!(fixed.incon_context_span.text, "Narendra Modi");
        assert!(validate_sample(&fixed).is_empty());
    }

    #[test]
    fn partition_reports_unrepairable() {
        let good = table_row();
        let mut bad = table_row();
        bad.id = "bad".into();
        bad.incon_context_span.text = "Rahul Gandhi".into();
        let (clean, quarantined, _) = partition_valid(&[good, bad]);
        assert_eq!(clean.len(), 1);
        assert_eq!(quarantined.len(), 1);
        assert_eq!(quarantined[0].id, "bad");
    }
}
