//! Greedy AIC feature selection.

use serde::Serialize;

use super::design::LabeledDesign;
use super::logistic::{fit_logistic, FitOptions};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    /// Start from every feature and drop one at a time.
    #[default]
    Backward,
    /// Start from the intercept-only model and add one at a time.
    Forward,
}

/// One accepted step. Step 0 is the starting model and has no feature.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionStep {
    pub step: usize,
    /// The feature removed (backward) or added (forward).
    pub feature: Option<String>,
    pub aic: f64,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub selected: Vec<String>,
    pub trace: Vec<SelectionStep>,
}

impl Selection {
    pub fn final_aic(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.aic)
    }
}

/// AIC of the model fitted on `features` (in design order).
pub fn subset_aic(
    design: &LabeledDesign,
    features: &[String],
    options: &FitOptions,
) -> Result<f64> {
    Ok(fit_logistic(&design.select(features)?, options)?.aic)
}

/// Greedy stepwise selection by AIC.
///
/// At each step every single-feature move is evaluated and the one with the
/// lowest AIC is taken if that AIC is strictly below the current one. Ties
/// go to the lexicographically smallest feature name. Surviving features
/// keep the design's column order.
pub fn select_features_aic(
    design: &LabeledDesign,
    direction: Direction,
    options: &FitOptions,
) -> Result<Selection> {
    let all = &design.feature_names;
    let mut current: Vec<String> = match direction {
        Direction::Backward => all.clone(),
        Direction::Forward => Vec::new(),
    };
    let mut current_aic = subset_aic(design, &current, options)?;
    let mut trace = vec![SelectionStep {
        step: 0,
        feature: None,
        aic: current_aic,
        n_features: current.len(),
    }];

    loop {
        let moves: Vec<&String> = match direction {
            Direction::Backward => current.iter().collect(),
            Direction::Forward => all.iter().filter(|f| !current.contains(f)).collect(),
        };
        let mut best: Option<(f64, &String)> = None;
        for feature in moves {
            let candidate: Vec<String> = match direction {
                Direction::Backward => current.iter().filter(|f| *f != feature).cloned().collect(),
                Direction::Forward => all
                    .iter()
                    .filter(|f| current.contains(f) || *f == feature)
                    .cloned()
                    .collect(),
            };
            let aic = subset_aic(design, &candidate, options)?;
            let better = match best {
                None => true,
                Some((b, name)) => aic < b || (aic == b && feature < name),
            };
            if better {
                best = Some((aic, feature));
            }
        }
        let Some((aic, feature)) = best else { break };
        if aic >= current_aic {
            break;
        }
        let feature = feature.clone();
        match direction {
            Direction::Backward => current.retain(|f| *f != feature),
            Direction::Forward => {
                current.push(feature.clone());
                current.sort_by_key(|f| all.iter().position(|a| a == f));
            }
        }
        current_aic = aic;
        trace.push(SelectionStep {
            step: trace.len(),
            feature: Some(feature),
            aic,
            n_features: current.len(),
        });
    }

    Ok(Selection {
        selected: current,
        trace,
    })
}
