//! Per-sample hallucination detection metrics.
//!
//! Metric names follow a fixed grammar so that detector feature names are
//! portable between runs:
//!
//! - `bleu4`, `entailment` (reference-based)
//! - `similarity:<embedding-model>`
//! - `<kind>:<attribution-model>` with kind one of `logprob`, `logit`,
//!   `entropy`, `source_attr`, `target_attr`, `changed_attr`,
//!   `unchanged_attr`
//!
//! Metrics whose inputs are absent from a trace are skipped with a reason,
//! never imputed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::diff::{build_change_mask, parse_unified_diff, ChangeMask};
use crate::error::{Error, Result};
use crate::trace::{GeneratedToken, GenerationTrace};

/// Floor applied to each modified n-gram precision before the geometric mean.
pub const BLEU_EPSILON: f64 = 1e-9;

pub const BLEU4: &str = "bleu4";
pub const ENTAILMENT: &str = "entailment";

/// Kinds of metrics computed per attribution model.
pub const MODEL_METRIC_KINDS: [&str; 7] = [
    "logprob",
    "logit",
    "entropy",
    "source_attr",
    "target_attr",
    "changed_attr",
    "unchanged_attr",
];

pub fn is_reference_based(name: &str) -> bool {
    name == BLEU4 || name == ENTAILMENT
}

/// Coarse metric family, used to pick one representative per family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricFamily {
    Reference,
    Similarity,
    Uncertainty,
    Attribution,
    Other,
}

pub fn metric_family(name: &str) -> MetricFamily {
    if is_reference_based(name) {
        return MetricFamily::Reference;
    }
    match name.split_once(':').map(|(k, _)| k) {
        Some("similarity") => MetricFamily::Similarity,
        Some("logprob" | "logit" | "entropy") => MetricFamily::Uncertainty,
        Some("source_attr" | "target_attr" | "changed_attr" | "unchanged_attr") => {
            MetricFamily::Attribution
        }
        _ => MetricFamily::Other,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub sample_id: String,
    pub values: BTreeMap<String, f64>,
    /// Metric name → reason it was not computed.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped: BTreeMap<String, String>,
}

impl MetricVector {
    pub fn new(sample_id: impl Into<String>) -> Self {
        MetricVector {
            sample_id: sample_id.into(),
            ..Default::default()
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    fn record(&mut self, name: String, value: Result<Option<f64>>, empty_reason: &str) {
        match value {
            Ok(Some(v)) if v.is_finite() => {
                self.values.insert(name, v);
            }
            Ok(Some(v)) => {
                self.skipped.insert(name, format!("non-finite value {v}"));
            }
            Ok(None) => {
                self.skipped.insert(name, empty_reason.to_string());
            }
            Err(e) => {
                self.skipped.insert(name, e.to_string());
            }
        }
    }
}

/// Lowercased whitespace tokenization used for BLEU.
pub fn bleu_tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            let key: Vec<&str> = w.iter().map(AsRef::as_ref).collect();
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Modified (clipped) n-gram precision. Zero when the candidate has no
/// n-grams of this order.
pub fn modified_precision<S: AsRef<str>>(candidate: &[S], reference: &[S], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let total: usize = cand.values().sum();
    if total == 0 {
        return 0.0;
    }
    let clipped: usize = cand
        .iter()
        .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    clipped as f64 / total as f64
}

/// Sentence-level BLEU-4 with uniform weights, each precision floored at
/// [`BLEU_EPSILON`], and brevity penalty `exp(1 - r/c)` when `c < r`.
pub fn bleu4<S: AsRef<str>>(candidate: &[S], reference: &[S]) -> Result<f64> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(Error::InvalidInput(
            "BLEU needs non-empty candidate and reference".into(),
        ));
    }
    let log_mean: f64 = (1..=4)
        .map(|n| {
            0.25 * modified_precision(candidate, reference, n)
                .max(BLEU_EPSILON)
                .ln()
        })
        .sum();
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(bp * log_mean.exp())
}

pub fn bleu4_text(candidate: &str, reference: &str) -> Result<f64> {
    bleu4(&bleu_tokenize(candidate), &bleu_tokenize(reference))
}

/// Validates and surfaces the stored entailment probability.
pub fn entailment(trace: &GenerationTrace) -> Result<Option<f64>> {
    match trace.entailment_probability {
        None => Ok(None),
        Some(p) if (0.0..=1.0).contains(&p) => Ok(Some(p)),
        Some(p) => Err(Error::Schema {
            sample_id: trace.sample_id.clone(),
            field: "entailment_probability".into(),
            message: format!("{p} outside [0, 1]"),
        }),
    }
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidInput(
            "zero vector in cosine similarity".into(),
        ));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

fn mean_of(tokens: &[GeneratedToken], f: impl Fn(&GeneratedToken) -> f64) -> Result<f64> {
    if tokens.is_empty() {
        return Err(Error::InvalidInput("no generated tokens".into()));
    }
    Ok(tokens.iter().map(f).sum::<f64>() / tokens.len() as f64)
}

/// Mean negative log-probability of the generated tokens.
pub fn seq_logprob(tokens: &[GeneratedToken]) -> Result<f64> {
    mean_of(tokens, |t| -t.logprob)
}

/// Mean raw (pre-softmax) logit of the generated tokens.
pub fn seq_logit(tokens: &[GeneratedToken]) -> Result<f64> {
    mean_of(tokens, |t| t.logit)
}

/// Mean next-token entropy over the generation.
pub fn seq_entropy(tokens: &[GeneratedToken]) -> Result<f64> {
    mean_of(tokens, |t| t.entropy)
}

fn matrix_shape(a: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = a.len();
    let t = a.first().map_or(0, Vec::len);
    if n == 0 || t == 0 {
        return Err(Error::InvalidInput("empty attribution matrix".into()));
    }
    if a.iter().any(|row| row.len() != t) {
        return Err(Error::InvalidInput("ragged attribution matrix".into()));
    }
    Ok((n, t))
}

/// Mean over output positions of the column maximum restricted to the rows
/// accepted by `keep`. `None` when no row is kept.
fn mean_column_max(a: &[Vec<f64>], keep: impl Fn(usize) -> bool) -> Result<Option<f64>> {
    let (_, t) = matrix_shape(a)?;
    let rows: Vec<&Vec<f64>> = a
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, r)| r)
        .collect();
    if rows.is_empty() {
        return Ok(None);
    }
    let total: f64 = (0..t)
        .map(|col| {
            rows.iter()
                .map(|r| r[col])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(Some(total / t as f64))
}

/// Mean over generated tokens of the largest attribution from any source token.
pub fn source_attr(a: &[Vec<f64>]) -> Result<f64> {
    mean_column_max(a, |_| true).map(|v| v.expect("matrix has at least one row"))
}

fn check_mask(a: &[Vec<f64>], mask: &ChangeMask) -> Result<()> {
    if mask.n_tokens != a.len() {
        return Err(Error::InvalidInput(format!(
            "mask covers {} tokens but matrix has {} rows",
            mask.n_tokens,
            a.len()
        )));
    }
    Ok(())
}

/// Like [`source_attr`] but restricted to source tokens in the changed set.
/// `Ok(None)` when no token is changed.
pub fn changed_attr(a: &[Vec<f64>], mask: &ChangeMask) -> Result<Option<f64>> {
    check_mask(a, mask)?;
    mean_column_max(a, |row| mask.contains_row(row))
}

/// Restricted to source tokens outside the changed set. `Ok(None)` when
/// every token is changed.
pub fn unchanged_attr(a: &[Vec<f64>], mask: &ChangeMask) -> Result<Option<f64>> {
    check_mask(a, mask)?;
    mean_column_max(a, |row| !mask.contains_row(row))
}

/// Mean over t = 2..T of the largest attribution from an earlier generated
/// token to token t. Zero for a single-token generation.
pub fn target_attr(target: &[Vec<f64>]) -> Result<f64> {
    let t = target.len();
    if t == 0 {
        return Err(Error::InvalidInput(
            "empty target attribution matrix".into(),
        ));
    }
    if target.iter().any(|row| row.len() != t) {
        return Err(Error::InvalidInput(
            "target attribution matrix is not square".into(),
        ));
    }
    if t == 1 {
        return Ok(0.0);
    }
    let total: f64 = (1..t)
        .map(|col| {
            (0..col)
                .map(|j| target[j][col])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    Ok(total / (t - 1) as f64)
}

/// Computes every metric whose inputs are present in `trace`.
pub fn compute_metric_vector(trace: &GenerationTrace, mask: &ChangeMask) -> MetricVector {
    let mut mv = MetricVector::new(&trace.sample_id);
    let model = &trace.attribution_model;

    match &trace.reference_text {
        Some(reference) => mv.record(
            BLEU4.into(),
            bleu4_text(&trace.generated_text, reference).map(Some),
            "",
        ),
        None => {
            mv.skipped
                .insert(BLEU4.into(), "reference_text absent".into());
        }
    }
    mv.record(
        ENTAILMENT.into(),
        entailment(trace),
        "entailment_probability absent",
    );

    if let Some(emb) = &trace.embeddings {
        for (name, (ex, ey)) in emb {
            mv.record(
                format!("similarity:{name}"),
                cosine_similarity(ex, ey).map(Some),
                "",
            );
        }
    }

    let toks = &trace.generated_tokens;
    mv.record(format!("logprob:{model}"), seq_logprob(toks).map(Some), "");
    mv.record(format!("logit:{model}"), seq_logit(toks).map(Some), "");
    mv.record(format!("entropy:{model}"), seq_entropy(toks).map(Some), "");

    let absent = "source_attribution absent";
    match &trace.source_attribution {
        Some(a) => {
            mv.record(format!("source_attr:{model}"), source_attr(a).map(Some), "");
            mv.record(
                format!("changed_attr:{model}"),
                changed_attr(a, mask),
                "no changed tokens",
            );
            mv.record(
                format!("unchanged_attr:{model}"),
                unchanged_attr(a, mask),
                "no unchanged tokens",
            );
        }
        None => {
            for kind in ["source_attr", "changed_attr", "unchanged_attr"] {
                mv.skipped.insert(format!("{kind}:{model}"), absent.into());
            }
        }
    }
    match &trace.target_attribution {
        Some(a) => mv.record(format!("target_attr:{model}"), target_attr(a).map(Some), ""),
        None => {
            mv.skipped.insert(
                format!("target_attr:{model}"),
                "target_attribution absent".into(),
            );
        }
    }
    mv
}

/// Builds the change mask from the trace's own diff text and computes its
/// metrics.
pub fn score_trace(trace: &GenerationTrace) -> Result<MetricVector> {
    let change = parse_unified_diff(&trace.source_text);
    let mask = build_change_mask(&change, &trace.source_tokens)?;
    Ok(compute_metric_vector(trace, &mask))
}

/// Union of metric names over all vectors, sorted.
pub fn metric_names(vectors: &[MetricVector]) -> Vec<String> {
    vectors
        .iter()
        .flat_map(|v| v.values.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Writes the metric matrix CSV: `sample_id` then one column per metric
/// name (sorted); an empty cell marks a skipped metric.
pub fn write_metric_csv<W: Write>(w: W, vectors: &[MetricVector]) -> Result<()> {
    let names = metric_names(vectors);
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["sample_id".to_string()];
    header.extend(names.iter().cloned());
    out.write_record(&header)?;
    for v in vectors {
        let mut row = vec![v.sample_id.clone()];
        row.extend(
            names
                .iter()
                .map(|n| v.get(n).map(|x| x.to_string()).unwrap_or_default()),
        );
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metric_csv<R: Read>(r: R) -> Result<Vec<MetricVector>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("sample_id") {
        return Err(Error::Csv("first metric column must be sample_id".into()));
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::Csv(format!("row {}: empty sample_id", row_idx + 1)));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::Csv(format!("duplicate sample_id {id}")));
        }
        let mut mv = MetricVector::new(id.clone());
        for (name, cell) in headers.iter().zip(record.iter()).skip(1) {
            let cell = cell.trim();
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::Csv(format!(
                    "sample {id}: metric {name}: not a number: {cell:?}"
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Csv(format!(
                    "sample {id}: metric {name}: non-finite value"
                )));
            }
            mv.values.insert(name.to_string(), v);
        }
        out.push(mv);
    }
    Ok(out)
}

#[cfg(test)]
#[allow(clippy::approx_constant)]
mod tests {
    use super::*;
    use crate::trace::tests::sample_trace;
    use proptest::prelude::*;

    fn gen(logit: f64, logprob: f64, entropy: f64) -> GeneratedToken {
        GeneratedToken {
            text: "x".into(),
            logit,
            logprob,
            entropy,
        }
    }

    fn mask(changed: &[usize], n: usize) -> ChangeMask {
        ChangeMask::new(changed.iter().copied().collect(), n).unwrap()
    }

    const A: [[f64; 3]; 2] = [[1.0, 0.0, 2.0], [3.0, 1.0, 0.0]];

    fn a() -> Vec<Vec<f64>> {
        A.iter().map(|r| r.to_vec()).collect()
    }

    #[test]
    fn bleu_identity() {
        let s = "fix the null check in parser";
        assert_eq!(bleu4_text(s, s).unwrap(), 1.0);
    }

    #[test]
    fn bleu_disjoint_is_floor_dominated() {
        let v = bleu4_text("alpha beta gamma delta", "one two three four").unwrap();
        assert!(v < 1e-2);
        assert!((v - BLEU_EPSILON).abs() < 1e-15);
    }

    #[test]
    fn bleu_hand_counted_example() {
        // p1 = 5/6, p2 = 3/5, p3 = 1/4, p4 = 0 -> eps, BP = 1
        let cand = bleu_tokenize("the cat sat on the mat");
        let refr = bleu_tokenize("the cat is on the mat");
        assert!((modified_precision(&cand, &refr, 1) - 5.0 / 6.0).abs() < 1e-15);
        assert!((modified_precision(&cand, &refr, 2) - 3.0 / 5.0).abs() < 1e-15);
        assert!((modified_precision(&cand, &refr, 3) - 1.0 / 4.0).abs() < 1e-15);
        assert_eq!(modified_precision(&cand, &refr, 4), 0.0);
        let expected = (5.0 / 6.0 * 3.0 / 5.0 * 1.0 / 4.0 * 1e-9f64).powf(0.25);
        let v = bleu4(&cand, &refr).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 3.35e-3).abs() / 3.35e-3 < 0.02);
    }

    #[test]
    fn bleu_brevity_penalty_and_clipping() {
        let v = bleu4_text("a b c d", "a b c d e f g h").unwrap();
        assert!((v - (1.0f64 - 2.0).exp()).abs() < 1e-12);
        // "the the the" clipped to reference count 1
        let c = bleu_tokenize("the the the");
        let r = bleu_tokenize("the cat");
        assert!((modified_precision(&c, &r, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bleu_is_case_insensitive_and_rejects_empty() {
        assert_eq!(
            bleu4_text("Fix The Bug Now", "fix the bug now").unwrap(),
            1.0
        );
        assert!(bleu4_text("", "a").is_err());
        assert!(bleu4_text("a", "  ").is_err());
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[2.0, 3.0], &[2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[1.0, 0.0], &[1.0, 1.0]).unwrap() - 0.70711).abs() < 1e-5);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(cosine_similarity(&[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn sequence_uncertainty_examples() {
        assert_eq!(
            seq_logprob(&[gen(0.0, 0.0, 0.0), gen(0.0, 0.0, 0.0)]).unwrap(),
            0.0
        );
        let v = seq_logprob(&[gen(0.0, 0.5f64.ln(), 0.0), gen(0.0, 0.25f64.ln(), 0.0)]).unwrap();
        assert!((v - 1.03972).abs() < 1e-5);
        assert!((seq_logprob(&[gen(0.0, -1.0, 0.0)]).unwrap() - 1.0).abs() < 1e-15);

        assert_eq!(
            seq_logit(&[gen(2.0, 0.0, 0.0), gen(4.0, 0.0, 0.0)]).unwrap(),
            3.0
        );
        assert_eq!(seq_logit(&[gen(14.1, 0.0, 0.0)]).unwrap(), 14.1);
        assert_eq!(
            seq_logit(&[gen(-1.0, 0.0, 0.0), gen(1.0, 0.0, 0.0)]).unwrap(),
            0.0
        );

        let ln2 = 2f64.ln();
        assert!(
            (seq_entropy(&[gen(0.0, 0.0, ln2), gen(0.0, 0.0, ln2)]).unwrap() - 0.69315).abs()
                < 1e-5
        );
        assert_eq!(seq_entropy(&[gen(0.0, 0.0, 0.0)]).unwrap(), 0.0);
        let h = seq_entropy(&[gen(0.0, 0.0, 0.2), gen(0.0, 0.0, 0.4), gen(0.0, 0.0, 0.6)]).unwrap();
        assert!((h - 0.4).abs() < 1e-12);
        assert!(seq_logit(&[]).is_err());
    }

    #[test]
    fn source_attr_examples() {
        assert_eq!(source_attr(&a()).unwrap(), 2.0);
        assert_eq!(source_attr(&vec![vec![0.0; 3]; 4]).unwrap(), 0.0);
        assert_eq!(source_attr(&[vec![5.0]]).unwrap(), 5.0);
        assert!(source_attr(&[]).is_err());
        assert!(source_attr(&[vec![]]).is_err());
    }

    #[test]
    fn changed_and_unchanged_examples() {
        let m = mask(&[2], 2);
        assert!((changed_attr(&a(), &m).unwrap().unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(unchanged_attr(&a(), &m).unwrap().unwrap(), 1.0);

        let all = mask(&[1, 2], 2);
        assert_eq!(
            changed_attr(&a(), &all).unwrap(),
            Some(source_attr(&a()).unwrap())
        );
        assert_eq!(unchanged_attr(&a(), &all).unwrap(), None);

        let none = ChangeMask::empty(2);
        assert_eq!(changed_attr(&a(), &none).unwrap(), None);
        assert_eq!(
            unchanged_attr(&a(), &none).unwrap(),
            Some(source_attr(&a()).unwrap())
        );

        let zeros = vec![vec![0.0; 3]; 2];
        assert_eq!(changed_attr(&zeros, &m).unwrap(), Some(0.0));
        assert_eq!(unchanged_attr(&zeros, &m).unwrap(), Some(0.0));

        assert!(changed_attr(&a(), &mask(&[1], 3)).is_err());
    }

    #[test]
    fn target_attr_examples() {
        assert_eq!(target_attr(&[vec![0.0]]).unwrap(), 0.0);
        let m = vec![
            vec![0.0, 0.4, 0.1],
            vec![0.0, 0.0, 0.5],
            vec![0.0, 0.0, 0.0],
        ];
        assert!((target_attr(&m).unwrap() - 0.45).abs() < 1e-15);
        assert_eq!(target_attr(&vec![vec![0.0; 4]; 4]).unwrap(), 0.0);
        assert!(target_attr(&[vec![0.0; 2]]).is_err());
    }

    #[test]
    fn full_trace_yields_ten_metrics() {
        let mv = score_trace(&sample_trace()).unwrap();
        assert_eq!(mv.values.len(), 10, "{:?}", mv.values.keys());
        assert!(mv.skipped.is_empty());
        assert_eq!(mv.get("entailment"), Some(0.9));
        assert!(mv.get("similarity:codebert").is_some());
        assert!(mv.get("changed_attr:attr").is_some());
    }

    #[test]
    fn missing_reference_skips_reference_metrics() {
        let mut t = sample_trace();
        t.reference_text = None;
        t.entailment_probability = None;
        let mv = score_trace(&t).unwrap();
        assert!(mv.get("bleu4").is_none());
        assert!(mv.get("entailment").is_none());
        assert_eq!(mv.skipped["bleu4"], "reference_text absent");
        assert_eq!(mv.values.len(), 8);
    }

    #[test]
    fn entailment_passthrough() {
        let mut t = sample_trace();
        t.entailment_probability = Some(0.0);
        assert_eq!(entailment(&t).unwrap(), Some(0.0));
        t.entailment_probability = Some(1.5);
        assert!(entailment(&t).is_err());
    }

    #[test]
    fn missing_attribution_keeps_uncertainty() {
        let mut t = sample_trace();
        t.source_attribution = None;
        t.target_attribution = None;
        let mv = score_trace(&t).unwrap();
        for kind in ["logprob", "logit", "entropy"] {
            assert!(mv.get(&format!("{kind}:attr")).is_some());
        }
        for kind in [
            "source_attr",
            "target_attr",
            "changed_attr",
            "unchanged_attr",
        ] {
            assert!(mv.get(&format!("{kind}:attr")).is_none());
            assert!(mv.skipped.contains_key(&format!("{kind}:attr")));
        }
    }

    #[test]
    fn no_changed_tokens_is_a_skip() {
        let mut t = sample_trace();
        t.source_text = t
            .source_text
            .replace("\n-old", "\n old")
            .replace("\n+new", "\n new");
        let mv = score_trace(&t).unwrap();
        assert_eq!(mv.skipped["changed_attr:attr"], "no changed tokens");
        assert!(mv.get("unchanged_attr:attr").is_some());
    }

    #[test]
    fn metric_csv_round_trip_with_gaps() {
        let mut a = MetricVector::new("a");
        a.values.insert("bleu4".into(), 0.25);
        a.values.insert("logit:m".into(), 1.0 / 3.0);
        let mut b = MetricVector::new("b");
        b.values.insert("logit:m".into(), -2.5);
        let mut buf = Vec::new();
        write_metric_csv(&mut buf, &[a.clone(), b.clone()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "sample_id,bleu4,logit:m");
        assert_eq!(text.lines().nth(2).unwrap(), "b,,-2.5");
        let back = read_metric_csv(buf.as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn metric_csv_rejects_garbage() {
        assert!(read_metric_csv("id,x\na,1\n".as_bytes()).is_err());
        assert!(read_metric_csv("sample_id,x\na,zz\n".as_bytes()).is_err());
        assert!(read_metric_csv("sample_id,x\na,1\na,2\n".as_bytes()).is_err());
    }

    #[test]
    fn families() {
        assert_eq!(metric_family("bleu4"), MetricFamily::Reference);
        assert_eq!(
            metric_family("similarity:codebert"),
            MetricFamily::Similarity
        );
        assert_eq!(metric_family("logit:llama"), MetricFamily::Uncertainty);
        assert_eq!(
            metric_family("changed_attr:cct5"),
            MetricFamily::Attribution
        );
        assert_eq!(metric_family("weird"), MetricFamily::Other);
    }

    fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (1usize..6, 1usize..6).prop_flat_map(|(n, t)| {
            prop::collection::vec(prop::collection::vec(0.0f64..10.0, t), n)
        })
    }

    proptest! {
        #[test]
        fn aggregation_is_positively_homogeneous(a in matrix(), c in 0.0f64..5.0, bits in any::<u8>()) {
            let n = a.len();
            let m = ChangeMask::new((1..=n).filter(|i| bits & (1 << (i - 1)) != 0).collect(), n).unwrap();
            let scaled: Vec<Vec<f64>> = a.iter().map(|r| r.iter().map(|v| v * c).collect()).collect();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + y.abs());
            prop_assert!(close(source_attr(&scaled).unwrap(), c * source_attr(&a).unwrap()));
            if let Some(v) = changed_attr(&a, &m).unwrap() {
                prop_assert!(close(changed_attr(&scaled, &m).unwrap().unwrap(), c * v));
            }
            if let Some(v) = unchanged_attr(&a, &m).unwrap() {
                prop_assert!(close(unchanged_attr(&scaled, &m).unwrap().unwrap(), c * v));
            }
        }

        #[test]
        fn bleu_bounded(cand in prop::collection::vec("[a-d]", 1..10), refr in prop::collection::vec("[a-d]", 1..10)) {
            let v = bleu4(&cand, &refr).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if cand.len() >= 4 {
                prop_assert!((bleu4(&cand, &cand).unwrap() - 1.0).abs() < 1e-15);
            }
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 3),
            b in prop::collection::vec(-5.0f64..5.0, 3),
            l in 0.1f64..10.0, m in 0.1f64..10.0,
        ) {
            prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
            let c = cosine_similarity(&a, &b).unwrap();
            prop_assert!((c - cosine_similarity(&b, &a).unwrap()).abs() < 1e-12);
            let la: Vec<f64> = a.iter().map(|x| x * l).collect();
            let mb: Vec<f64> = b.iter().map(|x| x * m).collect();
            prop_assert!((c - cosine_similarity(&la, &mb).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn uncertainty_nonnegative(lp in prop::collection::vec(-20.0f64..=0.0, 1..10)) {
            let toks: Vec<_> = lp.iter().map(|&p| gen(0.0, p, -p / 2.0)).collect();
            prop_assert!(seq_logprob(&toks).unwrap() >= 0.0);
            prop_assert!(seq_entropy(&toks).unwrap() >= 0.0);
        }
    }
}
