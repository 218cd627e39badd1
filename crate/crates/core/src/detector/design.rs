use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::labels::binary_label;
use crate::metrics::{is_reference_based, MetricVector};
use crate::trace::AnnotationLabel;

/// Which metric columns enter the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureSet {
    All,
    /// `bleu4` and `entailment` only.
    ReferenceBased,
    /// Everything except the reference-based metrics.
    ReferenceFree,
}

impl FeatureSet {
    pub fn admits(self, name: &str) -> bool {
        match self {
            FeatureSet::All => true,
            FeatureSet::ReferenceBased => is_reference_based(name),
            FeatureSet::ReferenceFree => !is_reference_based(name),
        }
    }
}

/// Fully observed samples × features with binary labels
/// (`true` = hallucination).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDesign {
    pub sample_ids: Vec<String>,
    pub feature_names: Vec<String>,
    /// Row-major, one row per sample.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

impl LabeledDesign {
    pub fn new(
        sample_ids: Vec<String>,
        feature_names: Vec<String>,
        x: Vec<Vec<f64>>,
        y: Vec<bool>,
    ) -> Result<Self> {
        if sample_ids.len() != x.len() || y.len() != x.len() {
            return Err(Error::InvalidInput(format!(
                "design has {} ids, {} rows and {} labels",
                sample_ids.len(),
                x.len(),
                y.len()
            )));
        }
        if let Some(r) = x.iter().position(|row| row.len() != feature_names.len()) {
            return Err(Error::InvalidInput(format!(
                "row {r} has {} values for {} features",
                x[r].len(),
                feature_names.len()
            )));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "design contains non-finite values".into(),
            ));
        }
        Ok(LabeledDesign {
            sample_ids,
            feature_names,
            x,
            y,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    /// Column subset, in the order of `names`.
    pub fn select(&self, names: &[String]) -> Result<LabeledDesign> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown feature {n}")))
            })
            .collect::<Result<_>>()?;
        Ok(LabeledDesign {
            sample_ids: self.sample_ids.clone(),
            feature_names: names.to_vec(),
            x: self
                .x
                .iter()
                .map(|row| idx.iter().map(|&c| row[c]).collect())
                .collect(),
            y: self.y.clone(),
        })
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        self.x.iter().map(|row| row[c]).collect()
    }
}

/// Rows and columns removed while building a design, with reasons.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignLog {
    pub dropped_rows: Vec<(String, String)>,
    pub dropped_columns: Vec<(String, String)>,
}

/// Builds the detector design from metric vectors and annotations.
///
/// Unsure and uninformative samples are excluded, as are samples without a
/// label. Rows missing any selected feature are dropped, then constant
/// columns are dropped. Row order follows `vectors`; columns are sorted by
/// name.
pub fn build_design(
    vectors: &[MetricVector],
    labels: &BTreeMap<String, AnnotationLabel>,
    feature_set: FeatureSet,
) -> Result<(LabeledDesign, DesignLog)> {
    let mut log = DesignLog::default();
    let mut kept: Vec<(&MetricVector, bool)> = Vec::new();
    for v in vectors {
        match labels.get(&v.sample_id).map(|l| binary_label(l.category)) {
            None => log
                .dropped_rows
                .push((v.sample_id.clone(), "no label".into())),
            Some(None) => log
                .dropped_rows
                .push((v.sample_id.clone(), "excluded category".into())),
            Some(Some(y)) => kept.push((v, y)),
        }
    }

    let names: Vec<String> = kept
        .iter()
        .flat_map(|(v, _)| v.values.keys())
        .filter(|n| feature_set.admits(n))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (v, label) in kept {
        let missing: Vec<&str> = names
            .iter()
            .filter(|n| !v.values.contains_key(*n))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            log.dropped_rows.push((
                v.sample_id.clone(),
                format!("missing features: {}", missing.join(", ")),
            ));
            continue;
        }
        ids.push(v.sample_id.clone());
        x.push(names.iter().map(|n| v.values[n]).collect::<Vec<f64>>());
        y.push(label);
    }
    if x.is_empty() {
        return Err(Error::InvalidInput(
            "no labeled, fully observed samples remain for the design".into(),
        ));
    }

    let mut keep_cols = Vec::new();
    for (c, name) in names.iter().enumerate() {
        let first = x[0][c];
        if x.iter().all(|row| row[c] == first) {
            log.dropped_columns
                .push((name.clone(), "zero variance".into()));
        } else {
            keep_cols.push(c);
        }
    }
    if keep_cols.is_empty() {
        return Err(Error::InvalidInput(
            "no non-constant feature columns remain".into(),
        ));
    }
    let feature_names = keep_cols.iter().map(|&c| names[c].clone()).collect();
    let x = x
        .into_iter()
        .map(|row| keep_cols.iter().map(|&c| row[c]).collect())
        .collect();

    for (id, reason) in &log.dropped_rows {
        log::info!("design: dropped sample {id}: {reason}");
    }
    for (name, reason) in &log.dropped_columns {
        log::info!("design: dropped feature {name}: {reason}");
    }
    Ok((LabeledDesign::new(ids, feature_names, x, y)?, log))
}

/// Column-wise z-scores using the population standard deviation.
/// Returns `(z, means, stds)`.
#[allow(clippy::type_complexity)]
pub fn standardize(x: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidInput(
            "cannot standardize an empty matrix".into(),
        ));
    }
    let p = x[0].len();
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    for c in 0..p {
        let mean = x.iter().map(|r| r[c]).sum::<f64>() / n as f64;
        let var = x.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        if std.is_nan() || std <= 0.0 || x.iter().all(|r| r[c] == x[0][c]) {
            return Err(Error::ZeroVariance(format!("column {c}")));
        }
        means[c] = mean;
        stds[c] = std;
    }
    let z = x
        .iter()
        .map(|r| (0..p).map(|c| (r[c] - means[c]) / stds[c]).collect())
        .collect();
    Ok((z, means, stds))
}
