//! Ridge-penalized logistic regression fitted by iteratively reweighted
//! least squares (Newton's method on the penalized log-likelihood).
//!
//! Features are z-scored before fitting; the intercept is not penalized.
//! Every accepted Newton step is checked against the penalized objective
//! and halved until it does not decrease, so the objective is monotone
//! across iterations.

use nalgebra::{DMatrix, DVector};

use super::design::{standardize, LabeledDesign};
use super::DetectorModel;
use crate::error::{Error, Result};

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub ridge_lambda: f64,
    /// Converged when the largest absolute parameter change is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ridge_lambda: DEFAULT_RIDGE,
            tol: 1e-10,
            max_iter: 100,
        }
    }
}

/// Fitted model plus the penalized log-likelihood after each iteration
/// (index 0 is the starting point).
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: DetectorModel,
    pub objective_history: Vec<f64>,
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^eta) without overflow.
pub(crate) fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Bernoulli log-likelihood of labels under linear predictors `eta`.
pub fn log_likelihood(eta: &[f64], y: &[bool]) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| if yi { e } else { 0.0 } - softplus(e))
        .sum()
}

struct Problem {
    /// n × (p + 1), first column all ones.
    xa: DMatrix<f64>,
    y: DVector<f64>,
    labels: Vec<bool>,
    lambda: f64,
}

impl Problem {
    fn eta(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.xa * theta
    }

    fn penalty(&self, theta: &DVector<f64>) -> f64 {
        0.5 * self.lambda * theta.rows(1, theta.len() - 1).norm_squared()
    }

    fn objective(&self, theta: &DVector<f64>) -> f64 {
        log_likelihood(self.eta(theta).as_slice(), &self.labels) - self.penalty(theta)
    }

    /// Newton direction `H⁻¹ g` for the penalized objective.
    fn newton_step(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let eta = self.eta(theta);
        let k = theta.len();
        let p = eta.map(sigmoid);
        let w = eta.map(|e| sigmoid(e) * sigmoid(-e));

        let mut grad = self.xa.transpose() * (&self.y - &p);
        let mut weighted = self.xa.clone();
        for (r, wr) in w.iter().enumerate() {
            weighted.row_mut(r).scale_mut(*wr);
        }
        let mut hess = self.xa.transpose() * weighted;
        for j in 1..k {
            grad[j] -= self.lambda * theta[j];
            hess[(j, j)] += self.lambda;
        }
        if let Some(ch) = hess.clone().cholesky() {
            return Ok(ch.solve(&grad));
        }
        hess.lu().solve(&grad).ok_or(Error::Singular)
    }
}

/// Fits the detector on all features of `design`.
pub fn fit_logistic(design: &LabeledDesign, options: &FitOptions) -> Result<DetectorModel> {
    fit_logistic_traced(design, options).map(|o| o.model)
}

pub fn fit_logistic_traced(design: &LabeledDesign, options: &FitOptions) -> Result<FitOutcome> {
    let n = design.n_rows();
    let n_pos = design.n_positive();
    if n == 0 || n_pos == 0 || n_pos == n {
        return Err(Error::SingleClass);
    }
    if !options.ridge_lambda.is_finite() || options.ridge_lambda < 0.0 {
        return Err(Error::InvalidInput(format!(
            "ridge lambda must be a nonnegative finite number, got {}",
            options.ridge_lambda
        )));
    }
    let p = design.n_features();
    let (z, means, stds) = if p == 0 {
        (vec![Vec::new(); n], Vec::new(), Vec::new())
    } else {
        standardize(&design.x)?
    };

    let xa = DMatrix::from_fn(n, p + 1, |r, c| if c == 0 { 1.0 } else { z[r][c - 1] });
    let problem = Problem {
        xa,
        y: DVector::from_iterator(n, design.y.iter().map(|&v| if v { 1.0 } else { 0.0 })),
        labels: design.y.clone(),
        lambda: options.ridge_lambda,
    };

    let rate = n_pos as f64 / n as f64;
    let mut theta = DVector::zeros(p + 1);
    theta[0] = (rate / (1.0 - rate)).ln();
    let mut current = problem.objective(&theta);
    let mut history = vec![current];

    let build = |theta: &DVector<f64>, iterations: usize| {
        let eta = problem.eta(theta);
        let ll = log_likelihood(eta.as_slice(), &design.y);
        let k = (p + 1) as f64;
        let correct = eta
            .iter()
            .zip(&design.y)
            .filter(|(&e, &y)| (sigmoid(e) >= 0.5) == y)
            .count();
        DetectorModel {
            feature_names: design.feature_names.clone(),
            means: means.clone(),
            stds: stds.clone(),
            coefficients: theta.rows(1, p).iter().copied().collect(),
            intercept: theta[0],
            ridge_lambda: options.ridge_lambda,
            log_likelihood: ll,
            aic: 2.0 * k - 2.0 * ll,
            n_train: n,
            train_accuracy: correct as f64 / n as f64,
            iterations,
        }
    };

    for iter in 1..=options.max_iter {
        let step = problem.newton_step(&theta)?;
        let mut scale = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let candidate = &theta + &step * scale;
            let value = problem.objective(&candidate);
            if value >= current {
                next = Some((candidate, value));
                break;
            }
            scale *= 0.5;
        }
        // No non-decreasing step exists at floating-point resolution: the
        // iterate is already at the optimum.
        let Some((candidate, value)) = next else {
            history.push(current);
            return Ok(FitOutcome {
                model: build(&theta, iter),
                objective_history: history,
            });
        };
        let delta = (&candidate - &theta).amax();
        theta = candidate;
        current = value;
        history.push(current);
        if delta < options.tol {
            return Ok(FitOutcome {
                model: build(&theta, iter),
                objective_history: history,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: options.max_iter,
        last: Box::new(build(&theta, options.max_iter)),
    })
}
