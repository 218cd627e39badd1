//! Browser demo bindings. Each exported function takes plain numbers or
//! strings and returns a JSON document for the page to render.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use chdetect::detector::{train_detector, TrainOptions};
use chdetect::diff::{build_change_mask, parse_unified_diff, whitespace_tokens};
use chdetect::evaluation::{point_biserial, roc_auc, roc_curve};
use chdetect::labels::labels_from_traces;
use chdetect::metrics::{changed_attr, score_trace, source_attr, target_attr, unchanged_attr};
use chdetect::synthetic::{generate_traces, SyntheticConfig};

/// Parses `diff`, whitespace-tokenizes it and draws a seeded random
/// attribution matrix with `t` generated tokens. Rows of changed tokens are
/// multiplied by `focus`, so raising it moves attention onto the change.
pub fn attribution_json(diff: &str, seed: u64, t: usize, focus: f64) -> Result<String, String> {
    if t == 0 {
        return Err("need at least one generated token".into());
    }
    if !(focus >= 0.0 && focus.is_finite()) {
        return Err("focus must be a nonnegative number".into());
    }
    let change = parse_unified_diff(diff);
    let tokens = whitespace_tokens(diff);
    let mask = build_change_mask(&change, &tokens).map_err(|e| e.to_string())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<Vec<f64>> = (0..tokens.len())
        .map(|row| {
            let scale = if mask.contains_row(row) { focus } else { 1.0 };
            (0..t).map(|_| scale * rng.random::<f64>()).collect()
        })
        .collect();
    let target: Vec<Vec<f64>> = (0..t)
        .map(|j| {
            (0..t)
                .map(|c| if j < c { rng.random::<f64>() } else { 0.0 })
                .collect()
        })
        .collect();

    let lines: Vec<Value> = change
        .lines
        .iter()
        .map(|l| json!({ "kind": l.kind.as_str(), "text": change.content(l) }))
        .collect();
    let token_rows: Vec<Value> = tokens
        .iter()
        .enumerate()
        .map(|(i, tok)| json!({ "text": tok.text, "changed": mask.contains(i + 1) }))
        .collect();
    let source = if a.is_empty() {
        None
    } else {
        Some(source_attr(&a).map_err(|e| e.to_string())?)
    };
    let out = json!({
        "lines": lines,
        "tokens": token_rows,
        "matrix": a,
        "metrics": {
            "source_attr": source,
            "changed_attr": if a.is_empty() { None } else { changed_attr(&a, &mask).map_err(|e| e.to_string())? },
            "unchanged_attr": if a.is_empty() { None } else { unchanged_attr(&a, &mask).map_err(|e| e.to_string())? },
            "target_attr": target_attr(&target).map_err(|e| e.to_string())?,
        },
    });
    Ok(out.to_string())
}

/// Two Gaussian classes of `n` samples each whose means differ by
/// `separation`. Scores are rounded to `1 / resolution` so that ties occur.
pub fn roc_json(separation: f64, n: usize, resolution: f64, seed: u64) -> Result<String, String> {
    if n == 0 {
        return Err("need at least one sample per class".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let positive = i < n;
        let mean = if positive { separation } else { 0.0 };
        let mut s = mean + rng.sample::<f64, _>(StandardNormal);
        if resolution > 0.0 {
            s = (s * resolution).round() / resolution;
        }
        scores.push(s);
        labels.push(positive);
    }
    let auc = roc_auc(&scores, &labels).map_err(|e| e.to_string())?;
    let curve = roc_curve(&scores, &labels).map_err(|e| e.to_string())?;
    let r_pb = point_biserial(&scores, &labels).ok();
    Ok(json!({ "auc": auc, "r_pb": r_pb, "curve": curve }).to_string())
}

/// Scores a synthetic corpus, trains the combined detector and compares it
/// with every individual metric. The detector AUC is measured in-sample.
pub fn detector_json(seed: u64, n: usize, signal: f64) -> Result<String, String> {
    let config = SyntheticConfig {
        n_samples: n,
        signal,
        ..SyntheticConfig::default()
    };
    let traces = generate_traces(seed, &config);
    let vectors = traces
        .iter()
        .map(score_trace)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let labels = labels_from_traces(&traces);
    let annotations: BTreeMap<_, _> = labels
        .iter()
        .map(|(k, v)| (k.clone(), v.annotation()))
        .collect();
    let ys: Vec<bool> = vectors
        .iter()
        .map(|v| labels[&v.sample_id].binary() == Some(true))
        .collect();

    let mut per_metric = BTreeMap::new();
    for name in chdetect::metrics::metric_names(&vectors) {
        let vals: Vec<f64> = vectors.iter().map(|v| v.values[&name]).collect();
        per_metric.insert(name, roc_auc(&vals, &ys).map_err(|e| e.to_string())?);
    }
    let trained = train_detector(&vectors, &annotations, &TrainOptions::default())
        .map_err(|e| e.to_string())?;
    let model = &trained.model;
    let probs: Vec<f64> = vectors
        .iter()
        .map(|v| {
            let row: Vec<f64> = model.feature_names.iter().map(|f| v.values[f]).collect();
            model.probability(&row)
        })
        .collect();
    let detector_auc = roc_auc(&probs, &ys).map_err(|e| e.to_string())?;
    let coefficients: BTreeMap<&String, f64> = model
        .feature_names
        .iter()
        .zip(model.coefficients.iter().copied())
        .collect();
    let aic_trace: Vec<Value> = trained
        .selection
        .trace
        .iter()
        .map(|s| json!({ "removed": s.feature, "aic": s.aic }))
        .collect();
    Ok(json!({
        "per_metric_auc": per_metric,
        "detector_auc": detector_auc,
        "coefficients": coefficients,
        "aic_trace": aic_trace,
        "train_accuracy": model.train_accuracy,
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn explore_attribution(diff: &str, seed: u32, t: u32, focus: f64) -> Result<String, JsError> {
    js(attribution_json(diff, seed.into(), t as usize, focus))
}

#[wasm_bindgen]
pub fn explore_roc(separation: f64, n: u32, resolution: f64, seed: u32) -> Result<String, JsError> {
    js(roc_json(separation, n as usize, resolution, seed.into()))
}

#[wasm_bindgen]
pub fn combined_detector(seed: u32, n: u32, signal: f64) -> Result<String, JsError> {
    js(detector_json(seed.into(), n as usize, signal))
}
