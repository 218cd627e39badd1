use std::collections::BTreeMap;

use chdetect::diff::{build_change_mask, parse_unified_diff, whitespace_tokens, LineKind};
use chdetect::evaluation::{evaluate, EvalOptions};
use chdetect::labels::{labels_from_traces, read_labels_csv, write_labels_csv};
use chdetect::metrics::{read_metric_csv, score_trace, write_metric_csv, MetricVector};
use chdetect::synthetic::{generate_traces, SyntheticConfig};
use chdetect::trace::{load_traces, parse_traces, validate_trace, write_traces, GenerationTrace};
use chdetect::{detector, Error};

fn small_corpus(seed: u64, n: usize) -> Vec<GenerationTrace> {
    generate_traces(
        seed,
        &SyntheticConfig {
            n_samples: n,
            ..Default::default()
        },
    )
}

#[test]
fn order_path_fixture() {
    let text = include_str!("fixtures/order_path.patch");
    let change = parse_unified_diff(text);
    let kinds: Vec<LineKind> = change.lines.iter().map(|l| l.kind).collect();
    assert_eq!(kinds[0], LineKind::Header);
    assert_eq!(kinds.iter().filter(|k| **k == LineKind::Added).count(), 1);
    assert!(kinds.iter().all(|k| *k != LineKind::Removed));

    let tokens = whitespace_tokens(text);
    let mask = build_change_mask(&change, &tokens).unwrap();
    let changed: Vec<&str> = mask
        .changed_indices
        .iter()
        .map(|&i| tokens[i - 1].text.as_str())
        .collect();
    assert_eq!(
        changed,
        [
            "public",
            "static",
            "final",
            "String",
            "ORDER_PATH",
            "=",
            "\"orderPath\";"
        ]
    );
    assert_eq!(mask.n_changed() + mask.n_unchanged(), tokens.len());
}

#[test]
fn jsonl_round_trip_through_file() {
    let traces = small_corpus(21, 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traces.jsonl");
    let mut buf = Vec::new();
    write_traces(&mut buf, &traces).unwrap();
    std::fs::write(&path, &buf).unwrap();
    let back = load_traces(&path).unwrap();
    assert_eq!(back, traces);
    for line in String::from_utf8(buf).unwrap().lines() {
        assert!(line.contains("\"schema_version\":\"1\""));
    }
}

#[test]
fn invalid_record_is_named() {
    let mut traces = small_corpus(22, 3);
    traces[1].generated_tokens[0].entropy = -1.0;
    assert!(!validate_trace(&traces[1]).is_empty());
    let mut buf = Vec::new();
    for t in &traces {
        buf.extend(t.to_json_line().unwrap().into_bytes());
        buf.push(b'\n');
    }
    let err = parse_traces(std::str::from_utf8(&buf).unwrap()).unwrap_err();
    match err {
        Error::Schema { sample_id, .. } => assert_eq!(sample_id, traces[1].sample_id),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn metric_csv_round_trip() {
    let traces = small_corpus(23, 20);
    let mut vectors: Vec<MetricVector> = traces.iter().map(|t| score_trace(t).unwrap()).collect();
    vectors[3].values.remove("bleu4");
    let mut buf = Vec::new();
    write_metric_csv(&mut buf, &vectors).unwrap();
    let back = read_metric_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), vectors.len());
    for (a, b) in vectors.iter().zip(&back) {
        assert_eq!(a.sample_id, b.sample_id);
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn labels_csv_round_trip() {
    let traces = small_corpus(24, 25);
    let labels = labels_from_traces(&traces);
    let mut buf = Vec::new();
    write_labels_csv(&mut buf, &labels).unwrap();
    assert_eq!(read_labels_csv(buf.as_slice()).unwrap(), labels);
}

#[test]
fn fit_predict_evaluate_end_to_end() {
    let traces = small_corpus(25, 400);
    let vectors: Vec<MetricVector> = traces.iter().map(|t| score_trace(t).unwrap()).collect();
    let labels = labels_from_traces(&traces);
    let annotations: BTreeMap<_, _> = labels
        .iter()
        .map(|(k, v)| (k.clone(), v.annotation()))
        .collect();
    let trained = detector::train_detector(&vectors, &annotations, &Default::default()).unwrap();
    assert!(!trained.model.feature_names.is_empty());

    let eval = evaluate(
        &vectors,
        &labels,
        Some(&trained.model),
        &EvalOptions::default(),
    )
    .unwrap();
    let r = &eval.report;
    assert_eq!(r.n_pos + r.n_neg, 400);
    let best_single = r
        .per_metric_auc
        .values()
        .map(|a| a.max(1.0 - a))
        .fold(0.0, f64::max);
    assert!(r.detector_auc.unwrap() > best_single);
    let comp = r.complementarity.as_ref().unwrap();
    assert_eq!(comp.metrics.len(), 3);
    assert_eq!(comp.top_k, 100);
    let shares: f64 = r.breakdowns["language:labeled"]
        .values()
        .map(|g| g.share)
        .sum();
    assert!((shares - 1.0).abs() < 1e-12);
}

#[test]
fn evaluate_rejects_unlabeled_samples() {
    let traces = small_corpus(26, 10);
    let vectors: Vec<MetricVector> = traces.iter().map(|t| score_trace(t).unwrap()).collect();
    let mut labels = labels_from_traces(&traces);
    labels.remove(&traces[4].sample_id);
    assert!(evaluate(&vectors, &labels, None, &EvalOptions::default()).is_err());
}
