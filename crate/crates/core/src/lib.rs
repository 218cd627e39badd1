//! Hallucination detection for natural-language text generated from code
//! changes (commit messages, code-review comments).
//!
//! The crate works over externalized model traces: a unified diff, the
//! generated text, per-token uncertainty values and attribution matrices
//! produced by some attribution model. From those it computes
//! reference-based and reference-free detection metrics, fits a combined
//! logistic-regression detector with AIC feature selection and evaluates
//! detection quality.
//!
//! Module map:
//!
//! - [`trace`]: trace data model, JSON Lines schema, loading and validation
//! - [`diff`]: unified-diff parsing and the changed-token mask
//! - [`metrics`]: per-sample metrics and the metric CSV format
//! - [`labels`]: annotation labels and the labels CSV format
//! - [`detector`]: design construction, IRLS logistic fit, AIC selection
//! - [`evaluation`]: ROC-AUC, point-biserial, complementarity, breakdowns
//! - [`synthetic`]: seeded synthetic traces with planted signal

pub mod detector;
pub mod diff;
pub mod error;
pub mod evaluation;
pub mod labels;
pub mod metrics;
pub mod synthetic;
pub mod trace;

pub use error::{Error, Result};
