use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use chdetect::detector::{
    predict, train_detector, write_coefficient_csv, write_selection_csv, DetectorModel, Direction,
    FeatureSet, FitOptions, TrainOptions, DEFAULT_RIDGE,
};
use chdetect::diff::{build_change_mask, parse_unified_diff, CodeChange};
use chdetect::evaluation::{evaluate, write_breakdowns_csv, write_joint_csv, EvalOptions};
use chdetect::labels::{labels_from_traces, read_labels_csv, write_labels_csv, Labels};
use chdetect::metrics::{read_metric_csv, score_trace, write_metric_csv, MetricVector};
use chdetect::synthetic::{generate_traces, SyntheticConfig};
use chdetect::trace::{load_traces, write_traces, GenerationTrace};

#[derive(Parser)]
#[command(
    name = "chdetect",
    version,
    about = "Hallucination metrics and detector for code-change-to-text generations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FeatureSetArg {
    All,
    Ref,
    Free,
}

impl From<FeatureSetArg> for FeatureSet {
    fn from(f: FeatureSetArg) -> Self {
        match f {
            FeatureSetArg::All => FeatureSet::All,
            FeatureSetArg::Ref => FeatureSet::ReferenceBased,
            FeatureSetArg::Free => FeatureSet::ReferenceFree,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Backward,
    Forward,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the metric vector of every trace into a CSV.
    Score {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select features by AIC and fit the logistic detector.
    Fit {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        feature_set: FeatureSetArg,
        #[arg(long, default_value_t = DEFAULT_RIDGE)]
        ridge: f64,
        #[arg(long, value_enum, default_value = "backward")]
        direction: DirectionArg,
        /// Model JSON; the coefficient report and AIC trace are written
        /// next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a fitted detector to a metric CSV.
    Predict {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-metric AUC and point-biserial, detector scores, overlap and breakdowns.
    Evaluate {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 0.25)]
        fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        /// Comma-separated metrics for the top-fraction overlap.
        #[arg(long, value_delimiter = ',')]
        complement: Option<Vec<String>>,
        /// Two comma-separated metrics for the joint distribution export.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        joint: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the line classification of a patch, or of each trace's source
    /// diff together with the change mask of its tokens.
    Diff {
        patch: Option<PathBuf>,
        #[arg(long, conflicts_with = "patch")]
        traces: Option<PathBuf>,
        /// Restrict --traces output to one sample.
        #[arg(long, requires = "traces")]
        sample: Option<String>,
    },
    /// Write seeded synthetic traces and their labels.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        signal: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score { traces, out } => cmd_score(&traces, &out),
        Command::Fit {
            metrics,
            labels,
            feature_set,
            ridge,
            direction,
            out,
        } => cmd_fit(
            &metrics,
            &labels,
            feature_set.into(),
            ridge,
            direction,
            &out,
        ),
        Command::Predict {
            metrics,
            model,
            threshold,
            out,
        } => cmd_predict(&metrics, &model, threshold, &out),
        Command::Evaluate {
            metrics,
            labels,
            model,
            fraction,
            threshold,
            complement,
            joint,
            out,
        } => {
            let joint = match joint {
                None => None,
                Some(v) if v.len() == 2 => Some((v[0].clone(), v[1].clone())),
                Some(_) => bail!("--joint takes exactly two metric names"),
            };
            let options = EvalOptions {
                threshold,
                fraction,
                complement_metrics: complement,
                joint,
            };
            cmd_evaluate(&metrics, &labels, model.as_deref(), &options, &out)
        }
        Command::Diff {
            patch,
            traces,
            sample,
        } => match (patch, traces) {
            (Some(p), None) => cmd_diff(&p),
            (None, Some(t)) => cmd_diff_traces(&t, sample.as_deref()),
            _ => bail!("give a patch file or --traces"),
        },
        Command::Synth {
            seed,
            n,
            signal,
            out,
            labels,
        } => cmd_synth(seed, n, signal, &out, labels.as_deref()),
    }
}

/// `dir/name.ext` -> `dir/name.<suffix>`
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn read_metrics(path: &Path) -> Result<Vec<MetricVector>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_metric_csv(f).with_context(|| format!("reading metrics {}", path.display()))
}

fn read_labels(path: &Path) -> Result<Labels> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_labels_csv(f).with_context(|| format!("reading labels {}", path.display()))
}

fn read_traces(path: &Path) -> Result<Vec<GenerationTrace>> {
    load_traces(path).with_context(|| format!("reading traces {}", path.display()))
}

fn cmd_score(traces_path: &Path, out: &Path) -> Result<()> {
    let traces = read_traces(traces_path)?;
    let vectors = traces
        .iter()
        .map(|t| score_trace(t).with_context(|| format!("scoring {}", t.sample_id)))
        .collect::<Result<Vec<_>>>()?;

    let mut w = create(out)?;
    write_metric_csv(&mut w, &vectors)?;
    w.flush()?;

    let skip_path = sibling(out, "skips.log");
    let mut log = create(&skip_path)?;
    let mut n_skips = 0;
    for v in &vectors {
        for (metric, reason) in &v.skipped {
            writeln!(log, "{}\t{metric}\t{reason}", v.sample_id)?;
            n_skips += 1;
        }
    }
    log.flush()?;
    log::info!(
        "scored {} traces into {}; {n_skips} skipped metrics listed in {}",
        vectors.len(),
        out.display(),
        skip_path.display()
    );
    Ok(())
}

fn cmd_fit(
    metrics: &Path,
    labels: &Path,
    feature_set: FeatureSet,
    ridge: f64,
    direction: DirectionArg,
    out: &Path,
) -> Result<()> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        bail!("--ridge must be a nonnegative number");
    }
    let vectors = read_metrics(metrics)?;
    let labels = read_labels(labels)?;
    let annotations: BTreeMap<_, _> = labels
        .iter()
        .map(|(k, v)| (k.clone(), v.annotation()))
        .collect();
    let options = TrainOptions {
        feature_set,
        direction: match direction {
            DirectionArg::Backward => Direction::Backward,
            DirectionArg::Forward => Direction::Forward,
        },
        fit: FitOptions {
            ridge_lambda: ridge,
            ..FitOptions::default()
        },
    };
    let trained = train_detector(&vectors, &annotations, &options).context("fitting detector")?;
    for (id, why) in &trained.design_log.dropped_rows {
        log::debug!("dropped sample {id}: {why}");
    }
    if !trained.design_log.dropped_rows.is_empty() {
        log::info!(
            "{} samples dropped from the design",
            trained.design_log.dropped_rows.len()
        );
    }
    for (col, why) in &trained.design_log.dropped_columns {
        log::info!("dropped feature {col}: {why}");
    }

    fs::write(out, trained.model.to_json()?)
        .with_context(|| format!("cannot write {}", out.display()))?;
    let mut coef = create(&sibling(out, "coefficients.csv"))?;
    write_coefficient_csv(&mut coef, &trained.model)?;
    coef.flush()?;
    let mut trace = create(&sibling(out, "aic_trace.csv"))?;
    write_selection_csv(&mut trace, &trained.selection)?;
    trace.flush()?;
    log::info!(
        "selected {} features (AIC {:.4}, train accuracy {:.4}) -> {}",
        trained.model.feature_names.len(),
        trained.model.aic,
        trained.model.train_accuracy,
        out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<DetectorModel> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    DetectorModel::from_json(&text).with_context(|| format!("reading model {}", path.display()))
}

fn cmd_predict(metrics: &Path, model: &Path, threshold: f64, out: &Path) -> Result<()> {
    let vectors = read_metrics(metrics)?;
    let model = load_model(model)?;
    let preds = predict(&model, &vectors);
    for (id, missing) in &preds.skipped {
        log::warn!("{id}: not scored, missing {}", missing.join(", "));
    }
    let mut w = csv::Writer::from_writer(create(out)?);
    w.write_record(["sample_id", "probability", "predicted"])?;
    for (id, p) in &preds.scored {
        w.write_record([
            id.clone(),
            p.to_string(),
            u8::from(*p >= threshold).to_string(),
        ])?;
    }
    w.flush()?;
    log::info!(
        "scored {} samples, skipped {}",
        preds.scored.len(),
        preds.skipped.len()
    );
    Ok(())
}

fn cmd_evaluate(
    metrics: &Path,
    labels: &Path,
    model: Option<&Path>,
    options: &EvalOptions,
    out: &Path,
) -> Result<()> {
    let vectors = read_metrics(metrics)?;
    let labels = read_labels(labels)?;
    let model = model.map(load_model).transpose()?;
    let eval = evaluate(&vectors, &labels, model.as_ref(), options).context("evaluating")?;

    let mut text = serde_json::to_string_pretty(&eval.report)?;
    text.push('\n');
    fs::write(out, text).with_context(|| format!("cannot write {}", out.display()))?;
    let mut b = create(&sibling(out, "breakdowns.csv"))?;
    write_breakdowns_csv(&mut b, &eval.report)?;
    b.flush()?;
    if let Some(joint) = &eval.joint {
        let mut j = create(&sibling(out, "joint.csv"))?;
        write_joint_csv(&mut j, joint)?;
        j.flush()?;
    }
    if let Some(auc) = eval.report.detector_auc {
        log::info!("detector AUC {auc:.4}");
    }
    Ok(())
}

fn print_lines(out: &mut impl Write, change: &CodeChange) -> Result<()> {
    for (i, line) in change.lines.iter().enumerate() {
        writeln!(
            out,
            "{}\t{}\t{}",
            i + 1,
            line.kind.as_str(),
            change.content(line)
        )?;
    }
    writeln!(
        out,
        "# lines={} header={} context={} added={} removed={}",
        change.lines.len(),
        change.count(chdetect::diff::LineKind::Header),
        change.count(chdetect::diff::LineKind::Context),
        change.count(chdetect::diff::LineKind::Added),
        change.count(chdetect::diff::LineKind::Removed),
    )?;
    Ok(())
}

fn cmd_diff(path: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let text = String::from_utf8_lossy(&bytes);
    let change = parse_unified_diff(&text);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    print_lines(&mut out, &change)?;
    out.flush()?;
    Ok(())
}

fn cmd_diff_traces(path: &Path, sample: Option<&str>) -> Result<()> {
    let traces = read_traces(path)?;
    let selected: Vec<&GenerationTrace> = traces
        .iter()
        .filter(|t| sample.is_none_or(|s| t.sample_id == s))
        .collect();
    if let (Some(s), true) = (sample, selected.is_empty()) {
        bail!("no trace with sample_id {s}");
    }
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for t in selected {
        writeln!(out, "## {}", t.sample_id)?;
        let change = parse_unified_diff(&t.source_text);
        print_lines(&mut out, &change)?;
        let mask = build_change_mask(&change, &t.source_tokens)?;
        for (i, tok) in t.source_tokens.iter().enumerate() {
            let tag = if mask.contains(i + 1) {
                "changed"
            } else {
                "unchanged"
            };
            writeln!(
                out,
                "{}\t{}..{}\t{tag}\t{}",
                i + 1,
                tok.char_start,
                tok.char_end,
                tok.text.escape_debug()
            )?;
        }
        writeln!(
            out,
            "# tokens={} changed={}",
            mask.n_tokens,
            mask.n_changed()
        )?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_synth(seed: u64, n: usize, signal: f64, out: &Path, labels: Option<&Path>) -> Result<()> {
    let config = SyntheticConfig {
        n_samples: n,
        signal,
        ..SyntheticConfig::default()
    };
    let traces = generate_traces(seed, &config);
    let mut w = create(out)?;
    write_traces(&mut w, &traces)?;
    w.flush()?;
    if let Some(path) = labels {
        let mut lw = create(path)?;
        write_labels_csv(&mut lw, &labels_from_traces(&traces))?;
        lw.flush()?;
    }
    log::info!(
        "wrote {} synthetic traces to {}",
        traces.len(),
        out.display()
    );
    Ok(())
}
