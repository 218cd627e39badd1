//! Combined-metric logistic-regression hallucination detector.
//!
//! Pipeline: [`build_design`] turns metric vectors and labels into a
//! fully observed design, [`select_features_aic`] picks features by AIC,
//! and [`fit_logistic`] fits the final model on the survivors. Coefficients
//! are reported per standardized feature; the raw-scale coefficient of
//! feature c is `coefficients[c] / stds[c]`.

mod design;
mod logistic;
mod selection;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use design::{build_design, standardize, DesignLog, FeatureSet, LabeledDesign};
pub use logistic::{
    fit_logistic, fit_logistic_traced, log_likelihood, sigmoid, FitOptions, FitOutcome,
    DEFAULT_RIDGE,
};
pub use selection::{select_features_aic, subset_aic, Direction, Selection, SelectionStep};

use crate::error::{Error, Result};
use crate::metrics::MetricVector;
use crate::trace::AnnotationLabel;

pub const MODEL_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorModel {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// One per standardized feature.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub ridge_lambda: f64,
    /// Unpenalized, at the fitted parameters.
    pub log_likelihood: f64,
    pub aic: f64,
    pub n_train: usize,
    /// Accuracy on the training design at threshold 0.5.
    pub train_accuracy: f64,
    pub iterations: usize,
}

impl DetectorModel {
    fn check(&self) -> Result<()> {
        let p = self.feature_names.len();
        if self.means.len() != p || self.stds.len() != p || self.coefficients.len() != p {
            return Err(Error::InvalidInput(
                "model vectors must all have one entry per feature".into(),
            ));
        }
        if self.stds.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::InvalidInput("model stds must be positive".into()));
        }
        Ok(())
    }

    /// Probability of hallucination for a raw (unstandardized) feature row.
    pub fn probability(&self, row: &[f64]) -> f64 {
        let eta = self.intercept
            + row
                .iter()
                .zip(&self.means)
                .zip(&self.stds)
                .zip(&self.coefficients)
                .map(|(((x, m), s), w)| w * (x - m) / s)
                .sum::<f64>();
        sigmoid(eta)
    }

    pub fn to_json(&self) -> Result<String> {
        self.check()?;
        let mut value = serde_json::to_value(self)?;
        if let Value::Object(map) = &mut value {
            map.insert(
                "schema_version".into(),
                Value::String(MODEL_SCHEMA_VERSION.into()),
            );
        }
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        let version = value
            .as_object_mut()
            .and_then(|m| m.remove("schema_version"));
        if version != Some(Value::String(MODEL_SCHEMA_VERSION.into())) {
            return Err(Error::InvalidInput(format!(
                "unsupported model schema_version {version:?}"
            )));
        }
        let model: DetectorModel = serde_json::from_value(value)?;
        model.check()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scored: Vec<(String, f64)>,
    /// Sample id and the features it lacked.
    pub skipped: Vec<(String, Vec<String>)>,
}

/// Applies the model to each vector that supplies all model features.
pub fn predict(model: &DetectorModel, vectors: &[MetricVector]) -> Predictions {
    let mut scored = Vec::new();
    let mut skipped = Vec::new();
    for v in vectors {
        let row: Vec<Option<f64>> = model.feature_names.iter().map(|n| v.get(n)).collect();
        if row.iter().all(Option::is_some) {
            let row: Vec<f64> = row.into_iter().map(Option::unwrap).collect();
            scored.push((v.sample_id.clone(), model.probability(&row)));
        } else {
            let missing = model
                .feature_names
                .iter()
                .filter(|n| v.get(n).is_none())
                .cloned()
                .collect();
            skipped.push((v.sample_id.clone(), missing));
        }
    }
    Predictions { scored, skipped }
}

/// 1 iff probability ≥ threshold.
pub fn classify(probabilities: &[f64], threshold: f64) -> Vec<bool> {
    probabilities.iter().map(|&p| p >= threshold).collect()
}

/// One row of the coefficient report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientRow {
    pub feature: String,
    pub coefficient: f64,
    pub abs_coefficient: f64,
    pub sign: &'static str,
}

/// Coefficients sorted by descending magnitude, ties by name.
pub fn coefficient_report(model: &DetectorModel) -> Vec<CoefficientRow> {
    let mut rows: Vec<CoefficientRow> = model
        .feature_names
        .iter()
        .zip(&model.coefficients)
        .map(|(f, &c)| CoefficientRow {
            feature: f.clone(),
            coefficient: c,
            abs_coefficient: c.abs(),
            sign: if c > 0.0 {
                "+"
            } else if c < 0.0 {
                "-"
            } else {
                "0"
            },
        })
        .collect();
    rows.sort_by(|a, b| {
        b.abs_coefficient
            .total_cmp(&a.abs_coefficient)
            .then_with(|| a.feature.cmp(&b.feature))
    });
    rows
}

pub fn write_coefficient_csv<W: Write>(w: W, model: &DetectorModel) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature", "coefficient", "abs_coefficient", "sign"])?;
    for row in coefficient_report(model) {
        out.write_record([
            row.feature,
            row.coefficient.to_string(),
            row.abs_coefficient.to_string(),
            row.sign.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_selection_csv<W: Write>(w: W, selection: &Selection) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["step", "feature", "aic", "n_features"])?;
    for s in &selection.trace {
        out.write_record([
            s.step.to_string(),
            s.feature.clone().unwrap_or_default(),
            s.aic.to_string(),
            s.n_features.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub feature_set: FeatureSet,
    pub direction: Direction,
    pub fit: FitOptions,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            feature_set: FeatureSet::All,
            direction: Direction::Backward,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DetectorModel,
    pub selection: Selection,
    pub design_log: DesignLog,
}

/// Design construction, AIC selection, and the final fit on the selected
/// features.
pub fn train_detector(
    vectors: &[MetricVector],
    labels: &BTreeMap<String, AnnotationLabel>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    let (design, design_log) = build_design(vectors, labels, options.feature_set)?;
    if design.n_positive() == 0 || design.n_positive() == design.n_rows() {
        return Err(Error::SingleClass);
    }
    let selection = select_features_aic(&design, options.direction, &options.fit)?;
    let model = fit_logistic(&design.select(&selection.selected)?, &options.fit)?;
    Ok(TrainOutcome {
        model,
        selection,
        design_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(coefs: &[f64], intercept: f64) -> DetectorModel {
        DetectorModel {
            feature_names: (0..coefs.len()).map(|i| format!("f{i}")).collect(),
            means: vec![0.0; coefs.len()],
            stds: vec![1.0; coefs.len()],
            coefficients: coefs.to_vec(),
            intercept,
            ridge_lambda: DEFAULT_RIDGE,
            log_likelihood: -1.0,
            aic: 4.0,
            n_train: 10,
            train_accuracy: 0.5,
            iterations: 3,
        }
    }

    fn mv(id: &str, vals: &[(&str, f64)]) -> MetricVector {
        let mut m = MetricVector::new(id);
        for (k, v) in vals {
            m.values.insert(k.to_string(), *v);
        }
        m
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = model(&[0.0, 0.0], 0.0);
        let p = predict(
            &m,
            &[
                mv("a", &[("f0", 3.0), ("f1", -9.0)]),
                mv("b", &[("f0", 1.0), ("f1", 1.0)]),
            ],
        );
        assert!(p.scored.iter().all(|(_, p)| *p == 0.5));
    }

    #[test]
    fn saturated_intercept() {
        let m = model(&[], 30.0);
        let p = predict(&m, &[mv("a", &[])]);
        assert!((p.scored[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn missing_features_are_skipped() {
        let m = model(&[1.0, 1.0], 0.0);
        let p = predict(&m, &[mv("a", &[("f0", 1.0)])]);
        assert!(p.scored.is_empty());
        assert_eq!(p.skipped, [("a".to_string(), vec!["f1".to_string()])]);
    }

    #[test]
    fn classify_boundary() {
        assert_eq!(classify(&[0.5, 0.49, 0.9], 0.5), [true, false, true]);
        assert!(classify(&[], 0.5).is_empty());
    }

    #[test]
    fn raw_scale_probability_uses_standardization() {
        let mut m = model(&[2.0], -1.0);
        m.means = vec![10.0];
        m.stds = vec![4.0];
        assert!((m.probability(&[14.0]) - sigmoid(1.0)).abs() < 1e-15);
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let m = model(&[0.25, -1.5], 0.1);
        let text = m.to_json().unwrap();
        assert!(text.contains("\"schema_version\": \"1\""));
        assert_eq!(DetectorModel::from_json(&text).unwrap(), m);
        let bad = text.replace("\"schema_version\": \"1\"", "\"schema_version\": \"9\"");
        assert!(DetectorModel::from_json(&bad).is_err());
        let mut broken = m.clone();
        broken.stds[0] = 0.0;
        assert!(broken.to_json().is_err());
    }

    #[test]
    fn coefficient_report_sorted_by_magnitude() {
        let m = model(&[0.5, -6.0, 2.0, 0.0], 0.0);
        let r = coefficient_report(&m);
        let names: Vec<_> = r.iter().map(|r| r.feature.as_str()).collect();
        assert_eq!(names, ["f1", "f2", "f0", "f3"]);
        assert_eq!(r[0].sign, "-");
        assert_eq!(r[0].abs_coefficient, 6.0);
        assert_eq!(r[3].sign, "0");
        let mut buf = Vec::new();
        write_coefficient_csv(&mut buf, &m).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("feature,coefficient,abs_coefficient,sign\nf1,-6,6,-\n"));
    }
}
