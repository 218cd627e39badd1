//! Detection-quality statistics: ROC-AUC, accuracy, point-biserial
//! correlation, top-fraction complementarity, grouped breakdowns and joint
//! distributions of metric pairs.
//!
//! Labels are `true` for hallucination (the positive class) and `false`
//! for non-hallucination. AUC is always computed in the metric's natural
//! direction, so values below 0.5 are meaningful.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;

use crate::detector::{classify, predict, DetectorModel};
use crate::error::{Error, Result};
use crate::labels::Labels;
use crate::metrics::{metric_family, metric_names, MetricFamily, MetricVector};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::InvalidInput(format!("length mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn class_counts(labels: &[bool]) -> Result<(usize, usize)> {
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs where the positive scores higher, ties
/// counting one half. Computed from midranks in O(n log n).
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let (n_pos, n_neg) = class_counts(labels)?;

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives, kept integral.
    let mut rank_sum_x2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1 ..= j+1 share the midrank (i + j + 2) / 2.
        let midrank_x2 = (i + j + 2) as u64;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u64;
        rank_sum_x2 += midrank_x2 * pos_in_group;
        i = j + 1;
    }
    let n_pos = n_pos as u64;
    // 2U = 2·R₊ − n₊(n₊+1)
    let u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
    Ok(u_x2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

/// ROC curve points `(false positive rate, true positive rate)` from
/// `(0, 0)` to `(1, 1)`, one point per distinct threshold.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    check_lengths(scores.len(), labels.len())?;
    let (n_pos, n_neg) = class_counts(labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

pub fn accuracy(predicted: &[bool], labels: &[bool]) -> Result<f64> {
    check_lengths(predicted.len(), labels.len())?;
    if labels.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty set".into()));
    }
    let correct = predicted.iter().zip(labels).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Point-biserial correlation `((M₁ − M₀)/s_n)·sqrt(n₁n₀/n²)` with `s_n` the
/// population standard deviation of all values.
pub fn point_biserial(values: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(values.len(), labels.len())?;
    let (n1, n0) = class_counts(labels)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::ZeroVariance("point-biserial values".into()));
    }
    let group_mean = |cls: bool, count: usize| {
        values
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == cls)
            .map(|(v, _)| v)
            .sum::<f64>()
            / count as f64
    };
    let (m1, m0) = (group_mean(true, n1), group_mean(false, n0));
    Ok((m1 - m0) / sd * ((n1 * n0) as f64 / (n * n)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOverlap {
    pub a: String,
    pub b: String,
    pub size: usize,
}

/// Overlap of the top-scoring samples across two or three metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Overlap {
    pub fraction: f64,
    /// Size of each top set, ⌈fraction·n⌉.
    pub top_k: usize,
    /// +1 when higher raw scores indicate hallucination, −1 otherwise.
    pub orientation: BTreeMap<String, f64>,
    /// Sample indices of each metric's top set, ascending.
    pub top_sets: BTreeMap<String, Vec<usize>>,
    pub pairwise: Vec<PairOverlap>,
    /// Size of the intersection of all top sets.
    pub all: usize,
}

/// Top-fraction complementarity. Each metric is oriented by the sign of its
/// point-biserial correlation with the labels (natural direction when it is
/// zero or undefined), then its ⌈fraction·n⌉ highest oriented scores form
/// its top set, ties going to the smaller sample index.
pub fn top_fraction_overlap(
    columns: &BTreeMap<String, Vec<f64>>,
    labels: &[bool],
    fraction: f64,
) -> Result<Overlap> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    if !(2..=3).contains(&columns.len()) {
        return Err(Error::InvalidInput(format!(
            "complementarity needs 2 or 3 metrics, got {}",
            columns.len()
        )));
    }
    let n = labels.len();
    for col in columns.values() {
        check_lengths(col.len(), n)?;
        if col.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidInput("NaN score".into()));
        }
    }
    let k = ((fraction * n as f64).ceil() as usize).min(n);

    let mut orientation = BTreeMap::new();
    let mut top_sets = BTreeMap::new();
    for (name, col) in columns {
        let sign = match point_biserial(col, labels) {
            Ok(r) if r < 0.0 => -1.0,
            _ => 1.0,
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| (sign * col[b]).total_cmp(&(sign * col[a])).then(a.cmp(&b)));
        let mut top: Vec<usize> = order[..k].to_vec();
        top.sort_unstable();
        orientation.insert(name.clone(), sign);
        top_sets.insert(name.clone(), top);
    }

    let sets: BTreeMap<&String, BTreeSet<usize>> = top_sets
        .iter()
        .map(|(n, v)| (n, v.iter().copied().collect()))
        .collect();
    let names: Vec<&String> = sets.keys().copied().collect();
    let mut pairwise = Vec::new();
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            pairwise.push(PairOverlap {
                a: names[i].clone(),
                b: names[j].clone(),
                size: sets[names[i]].intersection(&sets[names[j]]).count(),
            });
        }
    }
    let all = sets[names[0]]
        .iter()
        .filter(|i| names.iter().all(|n| sets[*n].contains(i)))
        .count();

    Ok(Overlap {
        fraction,
        top_k: k,
        orientation,
        top_sets,
        pairwise,
        all,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupShare {
    pub count: usize,
    pub share: f64,
}

/// Counts and shares of each attribute value among the selected ids.
pub fn breakdown(
    attributes: &BTreeMap<String, String>,
    selector: &[String],
) -> Result<BTreeMap<String, GroupShare>> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for id in selector {
        let value = attributes
            .get(id)
            .ok_or_else(|| Error::MissingAttribute(id.clone()))?;
        *counts.entry(value.clone()).or_insert(0) += 1;
    }
    let total = selector.len() as f64;
    Ok(counts
        .into_iter()
        .map(|(v, count)| {
            (
                v,
                GroupShare {
                    count,
                    share: count as f64 / total,
                },
            )
        })
        .collect())
}

/// Counts relative to the a = b diagonal; "above" means b > a.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QuadrantCounts {
    pub above_hallucination: usize,
    pub above_non_hallucination: usize,
    pub below_hallucination: usize,
    pub below_non_hallucination: usize,
    pub on_diagonal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistribution {
    pub metric_a: String,
    pub metric_b: String,
    pub rows: Vec<(f64, f64, bool)>,
    pub quadrants: QuadrantCounts,
}

pub fn joint_distribution(
    metric_a: &str,
    a: &[f64],
    metric_b: &str,
    b: &[f64],
    labels: &[bool],
) -> Result<JointDistribution> {
    check_lengths(a.len(), labels.len())?;
    check_lengths(b.len(), labels.len())?;
    let mut q = QuadrantCounts::default();
    let mut rows = Vec::with_capacity(a.len());
    for ((&x, &y), &l) in a.iter().zip(b).zip(labels) {
        rows.push((x, y, l));
        match (y > x, y < x, l) {
            (true, _, true) => q.above_hallucination += 1,
            (true, _, false) => q.above_non_hallucination += 1,
            (_, true, true) => q.below_hallucination += 1,
            (_, true, false) => q.below_non_hallucination += 1,
            _ => q.on_diagonal += 1,
        }
    }
    Ok(JointDistribution {
        metric_a: metric_a.to_string(),
        metric_b: metric_b.to_string(),
        rows,
        quadrants: q,
    })
}

pub fn write_joint_csv<W: Write>(w: W, joint: &JointDistribution) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([joint.metric_a.as_str(), joint.metric_b.as_str(), "label"])?;
    for (a, b, l) in &joint.rows {
        out.write_record([a.to_string(), b.to_string(), u8::from(*l).to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Complementarity {
    pub metrics: Vec<String>,
    pub n_samples: usize,
    pub fraction: f64,
    pub top_k: usize,
    pub orientation: BTreeMap<String, f64>,
    pub top_set_ids: BTreeMap<String, Vec<String>>,
    pub pairwise: Vec<PairOverlap>,
    pub all: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub per_metric_auc: BTreeMap<String, f64>,
    pub per_metric_r_pb: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_n_scored: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub complementarity: Option<Complementarity>,
    pub breakdowns: BTreeMap<String, BTreeMap<String, GroupShare>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointSummary>,
    pub n_pos: usize,
    pub n_neg: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointSummary {
    pub metric_a: String,
    pub metric_b: String,
    pub n_samples: usize,
    pub quadrants: QuadrantCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub threshold: f64,
    pub fraction: f64,
    /// Metrics for the complementarity analysis; when `None`, the best-AUC
    /// metric of each reference-free family (similarity, uncertainty,
    /// attribution) is used.
    pub complement_metrics: Option<Vec<String>>,
    pub joint: Option<(String, String)>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            threshold: 0.5,
            fraction: 0.25,
            complement_metrics: None,
            joint: None,
        }
    }
}

/// Everything produced by [`evaluate`]; the joint rows are kept out of the
/// JSON report and exported separately.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub joint: Option<JointDistribution>,
}

/// (ids, values, labels) for one metric over binary-labeled samples.
fn metric_column(
    vectors: &[(&MetricVector, bool)],
    name: &str,
) -> (Vec<String>, Vec<f64>, Vec<bool>) {
    let mut ids = Vec::new();
    let mut vals = Vec::new();
    let mut ys = Vec::new();
    for (v, y) in vectors {
        if let Some(x) = v.get(name) {
            ids.push(v.sample_id.clone());
            vals.push(x);
            ys.push(*y);
        }
    }
    (ids, vals, ys)
}

fn default_complement_metrics(auc: &BTreeMap<String, f64>) -> Vec<String> {
    let mut best: BTreeMap<MetricFamily, (&String, f64)> = BTreeMap::new();
    for (name, &a) in auc {
        let fam = metric_family(name);
        if !matches!(
            fam,
            MetricFamily::Similarity | MetricFamily::Uncertainty | MetricFamily::Attribution
        ) {
            continue;
        }
        match best.get(&fam) {
            Some((_, b)) if *b >= a => {}
            _ => {
                best.insert(fam, (name, a));
            }
        }
    }
    best.values().map(|(n, _)| (*n).clone()).collect()
}

/// Builds the evaluation report. Every metric sample must have a label;
/// only hallucination and non-hallucination samples are scored.
pub fn evaluate(
    vectors: &[MetricVector],
    labels: &Labels,
    model: Option<&DetectorModel>,
    options: &EvalOptions,
) -> Result<Evaluation> {
    let unlabeled: Vec<&str> = vectors
        .iter()
        .filter(|v| !labels.contains_key(&v.sample_id))
        .map(|v| v.sample_id.as_str())
        .collect();
    if !unlabeled.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} metric samples have no label (first: {})",
            unlabeled.len(),
            unlabeled[0]
        )));
    }
    let binary: Vec<(&MetricVector, bool)> = vectors
        .iter()
        .filter_map(|v| labels[&v.sample_id].binary().map(|y| (v, y)))
        .collect();
    let ys: Vec<bool> = binary.iter().map(|(_, y)| *y).collect();
    let (n_pos, n_neg) = class_counts(&ys)?;

    let mut per_metric_auc = BTreeMap::new();
    let mut per_metric_r_pb = BTreeMap::new();
    for name in metric_names(vectors) {
        let (_, vals, ys) = metric_column(&binary, &name);
        if let Ok(a) = roc_auc(&vals, &ys) {
            per_metric_auc.insert(name.clone(), a);
        }
        if let Ok(r) = point_biserial(&vals, &ys) {
            per_metric_r_pb.insert(name, r);
        }
    }

    let mut report = EvalReport {
        per_metric_auc,
        per_metric_r_pb,
        detector_auc: None,
        detector_accuracy: None,
        detector_threshold: None,
        detector_n_scored: None,
        complementarity: None,
        breakdowns: BTreeMap::new(),
        joint: None,
        n_pos,
        n_neg,
    };

    let hallucinated: Vec<String> = binary
        .iter()
        .filter(|(_, y)| *y)
        .map(|(v, _)| v.sample_id.clone())
        .collect();
    let type_attr: BTreeMap<String, String> = labels
        .values()
        .filter_map(|l| {
            l.hallucination_type
                .map(|t| (l.sample_id.clone(), t.as_str().to_string()))
        })
        .collect();
    let lang_attr: BTreeMap<String, String> = labels
        .values()
        .filter_map(|l| l.language.clone().map(|g| (l.sample_id.clone(), g)))
        .collect();
    let with_attr = |ids: &[String], attr: &BTreeMap<String, String>| -> Vec<String> {
        ids.iter()
            .filter(|i| attr.contains_key(*i))
            .cloned()
            .collect()
    };
    let mut add_breakdown =
        |key: &str, ids: &[String], attr: &BTreeMap<String, String>| -> Result<()> {
            let sel = with_attr(ids, attr);
            if !sel.is_empty() {
                report
                    .breakdowns
                    .insert(key.to_string(), breakdown(attr, &sel)?);
            }
            Ok(())
        };
    add_breakdown("hallucination_type:labeled", &hallucinated, &type_attr)?;
    add_breakdown("language:labeled", &hallucinated, &lang_attr)?;

    if let Some(model) = model {
        let labeled_vectors: Vec<MetricVector> = binary.iter().map(|(v, _)| (*v).clone()).collect();
        let preds = predict(model, &labeled_vectors);
        if !preds.skipped.is_empty() {
            log::warn!(
                "detector: {} samples lack model features and are not scored",
                preds.skipped.len()
            );
        }
        let probs: Vec<f64> = preds.scored.iter().map(|(_, p)| *p).collect();
        let truth: Vec<bool> = preds
            .scored
            .iter()
            .map(|(id, _)| labels[id].binary().expect("binary samples only"))
            .collect();
        let predicted = classify(&probs, options.threshold);
        report.detector_auc = Some(roc_auc(&probs, &truth)?);
        report.detector_accuracy = Some(accuracy(&predicted, &truth)?);
        report.detector_threshold = Some(options.threshold);
        report.detector_n_scored = Some(probs.len());

        let detected: Vec<String> = preds
            .scored
            .iter()
            .zip(&predicted)
            .zip(&truth)
            .filter(|((_, p), t)| **p && **t)
            .map(|(((id, _), _), _)| id.clone())
            .collect();
        add_breakdown("hallucination_type:detected", &detected, &type_attr)?;
        add_breakdown("language:detected", &detected, &lang_attr)?;
    }

    let complement = options
        .complement_metrics
        .clone()
        .unwrap_or_else(|| default_complement_metrics(&report.per_metric_auc));
    if complement.len() >= 2 {
        let rows: Vec<&(&MetricVector, bool)> = binary
            .iter()
            .filter(|(v, _)| complement.iter().all(|m| v.get(m).is_some()))
            .collect();
        let ys: Vec<bool> = rows.iter().map(|(_, y)| *y).collect();
        if rows.is_empty() {
            return Err(Error::InvalidInput(
                "no sample has all complementarity metrics".into(),
            ));
        }
        let columns: BTreeMap<String, Vec<f64>> = complement
            .iter()
            .map(|m| (m.clone(), rows.iter().map(|(v, _)| v.values[m]).collect()))
            .collect();
        let ov = top_fraction_overlap(&columns, &ys, options.fraction)?;
        report.complementarity = Some(Complementarity {
            metrics: columns.keys().cloned().collect(),
            n_samples: rows.len(),
            fraction: ov.fraction,
            top_k: ov.top_k,
            orientation: ov.orientation,
            top_set_ids: ov
                .top_sets
                .into_iter()
                .map(|(m, idx)| {
                    (
                        m,
                        idx.into_iter()
                            .map(|i| rows[i].0.sample_id.clone())
                            .collect(),
                    )
                })
                .collect(),
            pairwise: ov.pairwise,
            all: ov.all,
        });
    }

    let mut joint = None;
    if let Some((ma, mb)) = &options.joint {
        let rows: Vec<&(&MetricVector, bool)> = binary
            .iter()
            .filter(|(v, _)| v.get(ma).is_some() && v.get(mb).is_some())
            .collect();
        let a: Vec<f64> = rows.iter().map(|(v, _)| v.values[ma]).collect();
        let b: Vec<f64> = rows.iter().map(|(v, _)| v.values[mb]).collect();
        let ys: Vec<bool> = rows.iter().map(|(_, y)| *y).collect();
        let jd = joint_distribution(ma, &a, mb, &b, &ys)?;
        report.joint = Some(JointSummary {
            metric_a: ma.clone(),
            metric_b: mb.clone(),
            n_samples: rows.len(),
            quadrants: jd.quadrants,
        });
        joint = Some(jd);
    }

    Ok(Evaluation { report, joint })
}

pub fn write_breakdowns_csv<W: Write>(w: W, report: &EvalReport) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["group", "value", "count", "share"])?;
    for (group, values) in &report.breakdowns {
        for (value, gs) in values {
            out.write_record([
                group.clone(),
                value.clone(),
                gs.count.to_string(),
                gs.share.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn split(pos: &[f64], neg: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut s = pos.to_vec();
        s.extend_from_slice(neg);
        let mut l = vec![true; pos.len()];
        l.extend(vec![false; neg.len()]);
        (s, l)
    }

    fn naive_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1;
                    total += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        total / pairs as f64
    }

    #[test]
    fn auc_examples() {
        let (s, l) = split(&[0.9, 0.8], &[0.1, 0.2]);
        assert_eq!(roc_auc(&s, &l).unwrap(), 1.0);
        let (s, l) = split(&[0.5], &[0.5]);
        assert_eq!(roc_auc(&s, &l).unwrap(), 0.5);
        let (s, l) = split(&[0.8, 0.3], &[0.5, 0.1]);
        assert_eq!(roc_auc(&s, &l).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[1.0, 2.0], &[true, true]),
            Err(Error::SingleClass)
        ));
        assert!(roc_auc(&[1.0], &[true, false]).is_err());
    }

    #[test]
    fn roc_curve_endpoints() {
        let (s, l) = split(&[0.8, 0.3], &[0.5, 0.1]);
        let c = roc_curve(&s, &l).unwrap();
        assert_eq!(c.first(), Some(&(0.0, 0.0)));
        assert_eq!(c.last(), Some(&(1.0, 1.0)));
        let area: f64 = c
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum();
        assert!((area - 0.75).abs() < 1e-12);
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[true, false], &[true, false]).unwrap(), 1.0);
        assert_eq!(accuracy(&[false, true], &[true, false]).unwrap(), 0.0);
        assert_eq!(
            accuracy(&[true, true, false, false], &[true, true, false, true]).unwrap(),
            0.75
        );
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn point_biserial_examples() {
        let (v, l) = split(&[1.0, 3.0], &[2.0, 2.0]);
        assert_eq!(point_biserial(&v, &l).unwrap(), 0.0);
        let (v, l) = split(&[2.0, 4.0], &[1.0, 3.0]);
        assert!((point_biserial(&v, &l).unwrap() - 0.44721).abs() < 1e-5);
        let (v, l) = split(&[1.0, 1.0], &[0.0, 0.0]);
        assert_eq!(point_biserial(&v, &l).unwrap(), 1.0);
        assert!(point_biserial(&[1.0, 1.0], &[true, false]).is_err());
        assert!(point_biserial(&[1.0, 2.0], &[true, true]).is_err());
    }

    #[test]
    fn overlap_identical_columns() {
        let col: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let labels = vec![false, false, false, false, true, true, true, true];
        let cols = BTreeMap::from([("a".to_string(), col.clone()), ("b".to_string(), col)]);
        let ov = top_fraction_overlap(&cols, &labels, 0.25).unwrap();
        assert_eq!(ov.top_k, 2);
        assert_eq!(ov.top_sets["a"], [6, 7]);
        assert_eq!(ov.pairwise[0].size, 2);
        assert_eq!(ov.all, 2);
    }

    #[test]
    fn overlap_disjoint_and_oriented() {
        let labels = vec![true, true, true, false, false, false, true, false];
        // "a" peaks at 0,1; "b" is negatively correlated with labels, so its
        // oriented top set is its two lowest raw values, at 2 and 6.
        let a = vec![9.0, 8.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let b = vec![5.0, 5.0, 0.0, 6.0, 6.0, 6.0, 0.5, 6.0];
        let cols = BTreeMap::from([("a".to_string(), a), ("b".to_string(), b)]);
        let ov = top_fraction_overlap(&cols, &labels, 0.25).unwrap();
        assert_eq!(ov.orientation["b"], -1.0);
        assert_eq!(ov.top_sets["b"], [2, 6]);
        assert_eq!(ov.pairwise[0].size, 0);
    }

    #[test]
    fn overlap_argument_errors() {
        let cols = BTreeMap::from([
            ("a".to_string(), vec![1.0, 2.0]),
            ("b".to_string(), vec![1.0, 2.0]),
        ]);
        assert!(top_fraction_overlap(&cols, &[true, false], 0.0).is_err());
        assert!(top_fraction_overlap(&cols, &[true, false], 1.5).is_err());
        let one = BTreeMap::from([("a".to_string(), vec![1.0, 2.0])]);
        assert!(top_fraction_overlap(&one, &[true, false], 0.5).is_err());
    }

    #[test]
    fn breakdown_examples() {
        let attrs: BTreeMap<String, String> =
            [("1", "a"), ("2", "a"), ("3", "b"), ("4", "b"), ("5", "c")]
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect();
        let sel: Vec<String> = ["1", "2", "3", "4"].iter().map(|s| s.to_string()).collect();
        let b = breakdown(&attrs, &sel).unwrap();
        assert_eq!(
            b["a"],
            GroupShare {
                count: 2,
                share: 0.5
            }
        );
        assert_eq!(
            b["b"],
            GroupShare {
                count: 2,
                share: 0.5
            }
        );
        assert!(breakdown(&attrs, &[]).unwrap().is_empty());
        assert_eq!(
            breakdown(&attrs, &["5".to_string()]).unwrap()["c"].share,
            1.0
        );
        match breakdown(&attrs, &["9".to_string()]) {
            Err(Error::MissingAttribute(id)) => assert_eq!(id, "9"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn joint_examples() {
        let j = joint_distribution("a", &[1.0, 2.0], "b", &[1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(j.quadrants.on_diagonal, 2);
        assert_eq!(
            j.quadrants.above_hallucination + j.quadrants.below_hallucination,
            0
        );
        let j = joint_distribution("a", &[1.0], "b", &[2.0], &[true]).unwrap();
        assert_eq!(j.quadrants.above_hallucination, 1);
    }

    proptest! {
        #[test]
        fn auc_matches_pair_counting(
            data in prop::collection::vec((0u8..6, any::<bool>()), 2..60)
        ) {
            let scores: Vec<f64> = data.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let a = roc_auc(&scores, &labels).unwrap();
            prop_assert_eq!(a, naive_auc(&scores, &labels));
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert_eq!(a + roc_auc(&neg, &labels).unwrap(), 1.0);
            let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(a, roc_auc(&transformed, &labels).unwrap());
        }

        #[test]
        fn point_biserial_antisymmetric(
            data in prop::collection::vec((-50.0f64..50.0, any::<bool>()), 3..40)
        ) {
            let v: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
            let l: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
            prop_assume!(l.iter().any(|&x| x) && l.iter().any(|&x| !x));
            let r = point_biserial(&v, &l).unwrap();
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
            let neg: Vec<f64> = v.iter().map(|x| -x).collect();
            prop_assert_eq!(point_biserial(&neg, &l).unwrap(), -r);
        }

        #[test]
        fn breakdown_shares_sum_to_one(values in prop::collection::vec(0u8..4, 1..30)) {
            let attrs: BTreeMap<String, String> = values.iter().enumerate()
                .map(|(i, v)| (i.to_string(), v.to_string())).collect();
            let sel: Vec<String> = (0..values.len()).map(|i| i.to_string()).collect();
            let b = breakdown(&attrs, &sel).unwrap();
            let total: f64 = b.values().map(|g| g.share).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }
}
