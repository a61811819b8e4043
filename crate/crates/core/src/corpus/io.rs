use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde_json::{json, Map, Value};

use super::{CharSpan, ClaimComponent, CoarseEntityType, FactTriple, FineEntityType, InconsistencyType, Sample};
use crate::error::CorpusError;

const SUB_SPAN_FIELDS: [&str; 6] = [
    "source_head",
    "source_modifier",
    "relation_head",
    "relation_modifier",
    "target_head",
    "target_modifier",
];

/// Loads a JSONL corpus file, one sample per non-blank line, order preserved.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<Sample>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_corpus(BufReader::new(file)).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn read_corpus(reader: impl BufRead) -> Result<Vec<Sample>, CorpusError> {
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: Default::default(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        samples.push(parse_line(&line, i + 1)?);
    }
    Ok(samples)
}

/// Parses JSONL text held in memory.
pub fn parse_corpus(text: &str) -> Result<Vec<Sample>, CorpusError> {
    read_corpus(text.as_bytes())
}

fn err(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_line(line_text: &str, line: usize) -> Result<Sample, CorpusError> {
    let value: Value =
        serde_json::from_str(line_text).map_err(|e| err(line, "<record>", format!("invalid JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| err(line, "<record>", "record must be a JSON object"))?;

    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(err(line, "id", "must be a string or number")),
        None => return Err(err(line, "id", "missing")),
    };
    let claim = required_string(obj, "claim", line)?;
    let context = required_string(obj, "context", line)?;

    let source = required_span(obj, "source", line)?;
    let relation = required_span(obj, "relation", line)?;
    // An absent target is the empty target of an intransitive claim.
    let target = optional_span(obj, "target", line)?.unwrap_or_default();
    let mut triple = FactTriple::new(source, relation, target);
    for field in SUB_SPAN_FIELDS {
        let span = optional_span(obj, field, line)?;
        let component: ClaimComponent = field.parse().expect("sub-span field names are labels");
        *triple.sub_span_mut(component) = span;
    }

    let incon_context_span = required_span(obj, "incon_context_span", line)?;
    let component = required_label::<ClaimComponent>(obj, "claim_component", line)?;
    let itype = required_label::<InconsistencyType>(obj, "inconsistency_type", line)?;
    let coarse = optional_string(obj, "coarse_entity_type", line)?
        .map(|s| {
            s.parse::<CoarseEntityType>()
                .map_err(|e| err(line, "coarse_entity_type", e.to_string()))
        })
        .transpose()?;
    let fine = optional_string(obj, "fine_entity_type", line)?.map(FineEntityType::new);

    Ok(Sample {
        id,
        claim,
        context,
        triple,
        incon_context_span,
        component,
        itype,
        coarse,
        fine,
    })
}

fn required_string(obj: &Map<String, Value>, field: &str, line: usize) -> Result<String, CorpusError> {
    match obj.get(field) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(err(line, field, "must be a string")),
        None => Err(err(line, field, "missing")),
    }
}

fn optional_string(obj: &Map<String, Value>, field: &str, line: usize) -> Result<Option<String>, CorpusError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) if s.trim().is_empty() => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(err(line, field, "must be a string or null")),
    }
}

fn required_label<L: std::str::FromStr<Err = crate::error::LabelError>>(
    obj: &Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<L, CorpusError> {
    let s = required_string(obj, field, line)?;
    s.parse().map_err(|e: crate::error::LabelError| err(line, field, e.to_string()))
}

fn required_span(obj: &Map<String, Value>, field: &str, line: usize) -> Result<CharSpan, CorpusError> {
    optional_span(obj, field, line)?.ok_or_else(|| err(line, field, "missing span"))
}

fn optional_span(obj: &Map<String, Value>, field: &str, line: usize) -> Result<Option<CharSpan>, CorpusError> {
    let span = match obj.get(field) {
        None | Some(Value::Null) => return Ok(None),
        Some(Value::Object(span)) => span,
        Some(_) => return Err(err(line, field, "span must be an object {start, end, text} or null")),
    };
    let offset = |key: &str| -> Result<usize, CorpusError> {
        span.get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| err(line, field, format!("'{key}' must be a non-negative integer")))
    };
    let start = offset("start")?;
    let end = offset("end")?;
    let text = match span.get("text") {
        Some(Value::String(s)) => s.clone(),
        _ => return Err(err(line, field, "'text' must be a string")),
    };
    if end < start {
        return Err(err(line, field, format!("end {end} precedes start {start}")));
    }
    Ok(Some(CharSpan { start, end, text }))
}

impl Default for CharSpan {
    fn default() -> Self {
        CharSpan::EMPTY
    }
}

fn span_json(span: &CharSpan) -> Value {
    json!({ "start": span.start, "end": span.end, "text": span.text })
}

/// Serializes a sample into the corpus record schema.
pub fn sample_to_json(s: &Sample) -> Value {
    let mut obj = Map::new();
    obj.insert("id".into(), Value::String(s.id.clone()));
    obj.insert("claim".into(), Value::String(s.claim.clone()));
    obj.insert("context".into(), Value::String(s.context.clone()));
    obj.insert("source".into(), span_json(&s.triple.source));
    obj.insert("relation".into(), span_json(&s.triple.relation));
    obj.insert("target".into(), span_json(&s.triple.target));
    for field in SUB_SPAN_FIELDS {
        let component: ClaimComponent = field.parse().expect("sub-span field names are labels");
        let v = s.triple.sub_span(component).map(span_json).unwrap_or(Value::Null);
        obj.insert(field.into(), v);
    }
    obj.insert("incon_context_span".into(), span_json(&s.incon_context_span));
    obj.insert("claim_component".into(), json!(s.component));
    obj.insert("inconsistency_type".into(), json!(s.itype));
    obj.insert("coarse_entity_type".into(), json!(s.coarse));
    obj.insert("fine_entity_type".into(), json!(s.fine));
    Value::Object(obj)
}

pub fn write_corpus(mut out: impl Write, samples: &[Sample]) -> std::io::Result<()> {
    for s in samples {
        serde_json::to_writer(&mut out, &sample_to_json(s))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
