//! Trace data model and the JSON Lines trace file format.
//!
//! A trace carries everything the metrics need for one generated sample:
//! the diff fed to the model, token-level uncertainty of the forced
//! generation, attribution matrices, embeddings and the NLI entailment
//! probability. Each line of a trace file is one JSON object with a
//! top-level `"schema_version": "1"`. Optional fields are omitted, never
//! `null`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CodeReview,
    CommitMessage,
}

/// A token of the source diff, located by byte offsets into `source_text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceToken {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// One forced generation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedToken {
    pub text: String,
    /// Pre-softmax score of the emitted token.
    pub logit: f64,
    /// Natural log of the emitted token's probability.
    pub logprob: f64,
    /// Entropy (nats) of the full next-token distribution at this step.
    pub entropy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    NonHallucination,
    Uninformative,
    Unsure,
    Hallucination,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::NonHallucination => "non_hallucination",
            Category::Uninformative => "uninformative",
            Category::Unsure => "unsure",
            Category::Hallucination => "hallucination",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "non_hallucination" => Category::NonHallucination,
            "uninformative" => Category::Uninformative,
            "unsure" => Category::Unsure,
            "hallucination" => Category::Hallucination,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationType {
    InputInconsistency,
    LogicInconsistency,
    InputRepetition,
    IntentDeviation,
    Others,
}

impl HallucinationType {
    pub fn as_str(self) -> &'static str {
        match self {
            HallucinationType::InputInconsistency => "input_inconsistency",
            HallucinationType::LogicInconsistency => "logic_inconsistency",
            HallucinationType::InputRepetition => "input_repetition",
            HallucinationType::IntentDeviation => "intent_deviation",
            HallucinationType::Others => "others",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "input_inconsistency" => HallucinationType::InputInconsistency,
            "logic_inconsistency" => HallucinationType::LogicInconsistency,
            "input_repetition" => HallucinationType::InputRepetition,
            "intent_deviation" => HallucinationType::IntentDeviation,
            "others" => HallucinationType::Others,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationLabel {
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hallucination_type: Option<HallucinationType>,
}

impl AnnotationLabel {
    /// Type present iff the category is `hallucination`.
    pub fn is_consistent(&self) -> bool {
        (self.category == Category::Hallucination) == self.hallucination_type.is_some()
    }
}

/// Source-side and generation-side embedding vectors for one embedding model.
pub type EmbeddingPair = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationTrace {
    pub sample_id: String,
    pub task: Task,
    pub generator_model: String,
    pub attribution_model: String,
    pub source_text: String,
    pub source_tokens: Vec<SourceToken>,
    pub generated_text: String,
    pub generated_tokens: Vec<GeneratedToken>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_text: Option<String>,
    /// N rows (source tokens) by T columns (generated tokens).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_attribution: Option<Vec<Vec<f64>>>,
    /// Dense T×T, row j = earlier token, column t = current token; only
    /// entries with j < t may be nonzero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_attribution: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<BTreeMap<String, EmbeddingPair>>,
    /// Probability that the reference (premise) entails the generation
    /// (hypothesis).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entailment_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<AnnotationLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

impl GenerationTrace {
    pub fn n_source(&self) -> usize {
        self.source_tokens.len()
    }

    pub fn n_generated(&self) -> usize {
        self.generated_tokens.len()
    }

    /// Serializes to a single JSON line including the schema version.
    pub fn to_json_line(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut value {
            map.insert(
                "schema_version".to_string(),
                Value::String(SCHEMA_VERSION.to_string()),
            );
        }
        Ok(serde_json::to_string(&value)?)
    }
}

/// A single schema or invariant violation found by [`validate_trace`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every trace invariant and returns all violations found, in a
/// fixed order. An empty list means the trace is valid.
pub fn validate_trace(trace: &GenerationTrace) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = trace.n_source();
    let t = trace.n_generated();
    let src_len = trace.source_text.len();

    if trace.sample_id.is_empty() {
        out.push(Violation::new("sample_id", "empty sample_id"));
    }
    if t == 0 {
        out.push(Violation::new("generated_tokens", "T must be at least 1"));
    }

    let mut prev_start = 0usize;
    for (i, tok) in trace.source_tokens.iter().enumerate() {
        let field = format!("source_tokens[{i}]");
        if tok.char_start >= tok.char_end {
            out.push(Violation::new(
                &field,
                format!("char_start {} >= char_end {}", tok.char_start, tok.char_end),
            ));
        }
        if tok.char_end > src_len {
            out.push(Violation::new(
                &field,
                format!(
                    "char_end {} exceeds source_text length {}",
                    tok.char_end, src_len
                ),
            ));
        }
        if tok.char_start < prev_start {
            out.push(Violation::new(&field, "char_start decreases"));
        }
        prev_start = tok.char_start;
    }

    for (i, tok) in trace.generated_tokens.iter().enumerate() {
        let field = format!("generated_tokens[{i}]");
        if !tok.logit.is_finite() {
            out.push(Violation::new(&field, "logit is not finite"));
        }
        if tok.logprob.is_nan() || tok.logprob > 0.0 {
            out.push(Violation::new(
                &field,
                format!("logprob {} > 0", tok.logprob),
            ));
        }
        if !tok.entropy.is_finite() || tok.entropy < 0.0 {
            out.push(Violation::new(
                &field,
                format!("entropy {} < 0", tok.entropy),
            ));
        }
    }

    if let Some(a) = &trace.source_attribution {
        if a.len() != n {
            out.push(Violation::new(
                "source_attribution",
                format!("row count {} ≠ N = {}", a.len(), n),
            ));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != t {
                out.push(Violation::new(
                    "source_attribution",
                    format!("row {i}: column count {} ≠ T = {}", row.len(), t),
                ));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                out.push(Violation::new(
                    "source_attribution",
                    format!("row {i}: entry {v} is negative or not finite"),
                ));
            }
        }
    }

    if let Some(a) = &trace.target_attribution {
        if a.len() != t {
            out.push(Violation::new(
                "target_attribution",
                format!("row count {} ≠ T = {}", a.len(), t),
            ));
        }
        for (j, row) in a.iter().enumerate() {
            if row.len() != t {
                out.push(Violation::new(
                    "target_attribution",
                    format!("row {j}: column count {} ≠ T = {}", row.len(), t),
                ));
            }
            for (col, v) in row.iter().enumerate() {
                if !v.is_finite() || *v < 0.0 {
                    out.push(Violation::new(
                        "target_attribution",
                        format!("[{j}][{col}]: entry {v} is negative or not finite"),
                    ));
                } else if col <= j && *v != 0.0 {
                    out.push(Violation::new(
                        "target_attribution",
                        format!("[{j}][{col}]: nonzero entry on or above the diagonal"),
                    ));
                }
            }
        }
    }

    if let Some(emb) = &trace.embeddings {
        for (name, (ex, ey)) in emb {
            let field = format!("embeddings.{name}");
            if ex.len() != ey.len() {
                out.push(Violation::new(
                    &field,
                    format!("dimension mismatch {} vs {}", ex.len(), ey.len()),
                ));
            }
            if ex.is_empty() || ey.is_empty() {
                out.push(Violation::new(&field, "empty embedding"));
            }
            if ex.iter().chain(ey).any(|v| !v.is_finite()) {
                out.push(Violation::new(&field, "non-finite component"));
            }
        }
    }

    if let Some(p) = trace.entailment_probability {
        if !(0.0..=1.0).contains(&p) {
            out.push(Violation::new(
                "entailment_probability",
                format!("{p} outside [0, 1]"),
            ));
        }
    }

    if let Some(label) = &trace.label {
        if !label.is_consistent() {
            out.push(Violation::new(
                "label",
                "hallucination_type must be present iff category is hallucination",
            ));
        }
    }

    out
}

fn parse_record(line: &str, line_no: usize) -> Result<GenerationTrace> {
    let mut value: Value = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
        line: line_no,
        message: e.to_string(),
    })?;
    let map = value.as_object_mut().ok_or_else(|| Error::MalformedLine {
        line: line_no,
        message: "record is not a JSON object".into(),
    })?;
    let sample_id = map
        .get("sample_id")
        .and_then(Value::as_str)
        .map(str::to_string)
        .unwrap_or_else(|| format!("<line {line_no}>"));
    if let Some((key, _)) = map.iter().find(|(_, v)| v.is_null()) {
        return Err(Error::Schema {
            sample_id,
            field: key.clone(),
            message: "null is not allowed; omit absent optional fields".into(),
        });
    }
    match map.remove("schema_version") {
        Some(Value::String(v)) if v == SCHEMA_VERSION => {}
        Some(other) => {
            return Err(Error::Schema {
                sample_id,
                field: "schema_version".into(),
                message: format!("unsupported schema version {other}"),
            })
        }
        None => {
            return Err(Error::Schema {
                sample_id,
                field: "schema_version".into(),
                message: "missing".into(),
            })
        }
    }
    serde_json::from_value(value).map_err(|e| Error::Schema {
        sample_id,
        field: "record".into(),
        message: e.to_string(),
    })
}

/// Parses trace JSON Lines from a string. Blank lines are ignored.
pub fn parse_traces(text: &str) -> Result<Vec<GenerationTrace>> {
    let mut traces = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let trace = parse_record(line, idx + 1)?;
        let violations = validate_trace(&trace);
        if let Some(first) = violations.first() {
            let message = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::Schema {
                sample_id: trace.sample_id,
                field: first.field.clone(),
                message,
            });
        }
        if !seen.insert(trace.sample_id.clone()) {
            return Err(Error::Schema {
                sample_id: trace.sample_id,
                field: "sample_id".into(),
                message: "duplicate sample_id".into(),
            });
        }
        traces.push(trace);
    }
    Ok(traces)
}

/// Loads and validates a trace file. Traces are returned in file order.
pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<GenerationTrace>> {
    let text = std::fs::read_to_string(path)?;
    parse_traces(&text)
}

pub fn write_traces<W: Write>(mut w: W, traces: &[GenerationTrace]) -> Result<()> {
    for trace in traces {
        writeln!(w, "{}", trace.to_json_line()?)?;
    }
    Ok(())
}
