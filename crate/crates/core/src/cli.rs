//! The `syran` command line.
//!
//! Every subcommand is a plain function over a parsed [`RunConfig`] that
//! writes its human- or machine-readable output to a caller-supplied sink,
//! so the binary stays a thin wrapper and tests can drive the commands
//! directly.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use crate::data::{kepler_dataset, load_csv, train_test_split, DataError, Dataset};
use crate::ensemble::{fit, EnsembleError, EnsembleModel, Hyperparameters};
use crate::eval::{evaluate_model, kepler_equivalence_rate, run_experiment, EvalError, EvalReport};

/// Relative tolerance used by `demo-kepler` when counting Kepler forms.
pub const KEPLER_TOLERANCE: f64 = 1e-2;
/// Sample points per equivalence check.
pub const KEPLER_SAMPLES: usize = 256;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("writing output: {0}")]
    Output(#[from] io::Error),
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train an ensemble on a CSV file and write the model.
    Fit,
    /// Score every row of a CSV file with a stored model.
    Score,
    /// Fit and evaluate AUC-ROC on labelled data.
    Eval,
    /// Print a stored model's equations, best training loss first.
    Inspect,
    /// Rediscover Kepler's third law from the embedded 13-body table.
    DemoKepler,
    /// Vary one of gamma, bag-size or delta over a grid and tabulate results.
    Sweep,
}

#[derive(Debug, Clone, PartialEq, Parser)]
#[command(name = "syran", version, about = "Anomaly detection with symbolic invariants")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Input CSV (header row required).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Model file to write (fit) or read (score, inspect, eval).
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Separate labelled test CSV for `eval` and `sweep`; otherwise the input is split.
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// Name of the 0/1 anomaly label column.
    #[arg(long, global = true)]
    pub label_column: Option<String>,
    /// M, number of invariants.
    #[arg(long, global = true)]
    pub ensemble_size: Option<usize>,
    /// K, features per invariant.
    #[arg(long, global = true)]
    pub bag_size: Option<usize>,
    /// Noise margin.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Complexity weight.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,
    /// G, candidate evaluations per invariant.
    #[arg(long, global = true)]
    pub generations: Option<usize>,
    #[arg(long, global = true)]
    pub population: Option<usize>,
    #[arg(long, global = true, env = "SYRAN_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Text)]
    pub format: OutputFormat,
    /// Sweep grid, e.g. `gamma=0.001,0.01,0.1,0.5`.
    #[arg(long, global = true)]
    pub grid: Vec<String>,
    /// Share of normal rows used for training when splitting.
    #[arg(long, global = true, default_value_t = 0.5)]
    pub train_fraction: f64,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            input: None,
            model: None,
            output: None,
            test: None,
            label_column: None,
            ensemble_size: None,
            bag_size: None,
            delta: None,
            gamma: None,
            generations: None,
            population: None,
            seed: None,
            workers: None,
            format: OutputFormat::Text,
            grid: Vec::new(),
            train_fraction: 0.5,
        }
    }

    /// Defaults with every override applied.
    pub fn hyperparameters(&self) -> Hyperparameters {
        let mut hp = Hyperparameters::default();
        if let Some(m) = self.ensemble_size {
            hp.ensemble_size = m;
        }
        if let Some(k) = self.bag_size {
            hp.bag_size = k;
        }
        if let Some(d) = self.delta {
            hp.delta = d;
        }
        if let Some(g) = self.gamma {
            hp.gamma = g;
        }
        if let Some(g) = self.generations {
            hp.evolution.evaluations = g;
        }
        if let Some(p) = self.population {
            hp.evolution.population_size = p;
        }
        if let Some(s) = self.seed {
            hp.master_seed = s;
        }
        hp
    }

    fn input(&self) -> Result<&Path, CliError> {
        self.input.as_deref().ok_or_else(|| usage("--input is required"))
    }

    fn model_path(&self) -> Result<&Path, CliError> {
        self.model.as_deref().ok_or_else(|| usage("--model is required"))
    }
}

/// Writes `text` to `--output` if given, else to `out`.
fn emit(cfg: &RunConfig, out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match &cfg.output {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.display().to_string(), source }),
        None => Ok(out.write_all(text.as_bytes())?),
    }
}

#[derive(Serialize)]
struct MemberSummary {
    member: usize,
    equation: String,
    subset: Vec<String>,
    train_loss: f64,
    mean_deviation: f64,
    complexity: f64,
}

fn member_summaries(model: &EnsembleModel) -> Vec<MemberSummary> {
    model
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| MemberSummary {
            member: i,
            equation: m.equation(&model.feature_names),
            subset: m.subset.iter().map(|&j| model.feature_names[j].clone()).collect(),
            train_loss: m.train_loss.total,
            mean_deviation: m.mean_deviation,
            complexity: m.expression.complexity(),
        })
        .collect()
}

fn summary_table(rows: &[MemberSummary]) -> String {
    let mut s = format!("{:>6}  {:>10}  {:>12}  {:>10}  equation\n", "member", "loss", "mean_dev", "complexity");
    for r in rows {
        s.push_str(&format!(
            "{:>6}  {:>10.6}  {:>12.6e}  {:>10}  {}\n",
            r.member, r.train_loss, r.mean_deviation, r.complexity, r.equation
        ));
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_training(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg.input()?;
    let ds = load_csv(path, cfg.label_column.as_deref())?;
    if ds.nrows() < 2 {
        return Err(usage(format!("{}: need at least 2 data rows to train, found {}", path.display(), ds.nrows())));
    }
    Ok(ds.without_labels())
}

pub fn cmd_fit(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let train = load_training(cfg)?;
    let model_path = cfg.model_path()?;
    let model = fit(&train, &cfg.hyperparameters())?;
    model.save(model_path)?;
    let rows = member_summaries(&model);
    let text = match cfg.format {
        OutputFormat::Json => to_json(&rows),
        OutputFormat::Text => format!(
            "trained {} invariants on {} rows, model written to {}\n{}",
            model.members.len(),
            train.nrows(),
            model_path.display(),
            summary_table(&rows)
        ),
    };
    emit(cfg, out, &text)
}

pub fn cmd_score(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let model = EnsembleModel::load(cfg.model_path()?)?;
    let input = cfg.input()?;
    let ds = load_csv(input, cfg.label_column.as_deref())?;
    let scores = model.score(ds.rows()).map_err(|e| match e {
        EnsembleError::WidthMismatch { expected, found } => {
            usage(format!("{}: {found} feature columns but the model expects {expected}", input.display()))
        }
        other => other.into(),
    })?;
    // no rows, no header: an empty input scores to an empty output
    let mut text = if scores.is_empty() { String::new() } else { String::from("score\n") };
    for s in scores {
        text.push_str(&format!("{s}\n"));
    }
    emit(cfg, out, &text)
}

fn eval_split(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let input = cfg.input()?;
    let label =
        cfg.label_column.as_deref().ok_or_else(|| usage("--label-column is required for labelled evaluation"))?;
    let ds = load_csv(input, Some(label))?;
    match &cfg.test {
        Some(test) => {
            let test = load_csv(test, Some(label))?;
            // train only on rows marked normal
            let normals: Vec<usize> =
                (0..ds.nrows()).filter(|&i| !ds.labels().expect("loaded with labels")[i]).collect();
            let rows = ds.rows().select_rows(&normals);
            Ok((Dataset::new(rows, ds.feature_names().to_vec(), None)?, test))
        }
        None => Ok(train_test_split(&ds, cfg.train_fraction, cfg.seed.unwrap_or(0))?),
    }
}

fn render_report(cfg: &RunConfig, report: &EvalReport) -> String {
    match cfg.format {
        OutputFormat::Json => report.to_json(),
        OutputFormat::Text => report.to_text(),
    }
}

pub fn cmd_eval(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (train, test) = eval_split(cfg)?;
    let started = Instant::now();
    let model = fit(&train, &cfg.hyperparameters())?;
    if let Some(p) = &cfg.model {
        model.save(p)?;
    }
    let report = EvalReport { runtime_seconds: started.elapsed().as_secs_f64(), ..evaluate_model(&model, &test)? };
    emit(cfg, out, &render_report(cfg, &report))
}

pub fn cmd_inspect(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let model = EnsembleModel::load(cfg.model_path()?)?;
    let mut rows = member_summaries(&model);
    rows.sort_by(|a, b| a.train_loss.total_cmp(&b.train_loss).then(a.member.cmp(&b.member)));
    let text = match cfg.format {
        OutputFormat::Json => to_json(&rows),
        OutputFormat::Text => summary_table(&rows),
    };
    emit(cfg, out, &text)
}

#[derive(Serialize)]
struct KeplerDemoReport {
    members: Vec<MemberSummary>,
    equivalent: Vec<bool>,
    equivalence_rate: f64,
    tolerance: f64,
    elapsed_seconds: f64,
    seconds_per_member: f64,
}

pub fn cmd_demo_kepler(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let hp = cfg.hyperparameters();
    let started = Instant::now();
    let model = fit(&kepler_dataset(), &hp)?;
    let elapsed = started.elapsed().as_secs_f64();
    if let Some(p) = &cfg.model {
        model.save(p)?;
    }
    let rate = kepler_equivalence_rate(&model, KEPLER_TOLERANCE, KEPLER_SAMPLES, hp.master_seed);
    let equivalent: Vec<bool> = model
        .members
        .iter()
        .map(|m| {
            let single = EnsembleModel::new(vec![m.clone()], model.feature_names.clone(), hp.clone(), 2)
                .expect("member of a valid model");
            kepler_equivalence_rate(&single, KEPLER_TOLERANCE, KEPLER_SAMPLES, hp.master_seed) == 1.0
        })
        .collect();
    let report = KeplerDemoReport {
        members: member_summaries(&model),
        equivalent,
        equivalence_rate: rate,
        tolerance: KEPLER_TOLERANCE,
        elapsed_seconds: elapsed,
        seconds_per_member: elapsed / model.members.len() as f64,
    };
    let text = match cfg.format {
        OutputFormat::Json => to_json(&report),
        OutputFormat::Text => {
            let mut s = format!("{:>6}  {:>6}  {:>10}  equation\n", "member", "kepler", "loss");
            for (m, eq) in report.members.iter().zip(&report.equivalent) {
                s.push_str(&format!(
                    "{:>6}  {:>6}  {:>10.6}  {}\n",
                    m.member,
                    if *eq { "yes" } else { "no" },
                    m.train_loss,
                    m.equation
                ));
            }
            s.push_str(&format!(
                "Kepler-equivalent invariants: {:.1}% ({} of {}, tol {})\n",
                100.0 * rate,
                report.equivalent.iter().filter(|e| **e).count(),
                report.members.len(),
                KEPLER_TOLERANCE
            ));
            s.push_str(&format!("elapsed: {:.2}s ({:.3}s per invariant)\n", elapsed, report.seconds_per_member));
            s
        }
    };
    emit(cfg, out, &text)
}

/// Hyperparameter a sweep may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    Gamma,
    BagSize,
    Delta,
}

/// Parses `name=v1,v2,...`; exactly one hyperparameter per sweep.
pub fn parse_grid(grids: &[String]) -> Result<(SweepParameter, Vec<f64>), CliError> {
    let [grid] = grids else {
        return Err(usage(if grids.is_empty() {
            "--grid is required, e.g. --grid gamma=0.001,0.01,0.1,0.5".to_string()
        } else {
            "a sweep varies one hyperparameter at a time; pass a single --grid".to_string()
        }));
    };
    let (name, values) =
        grid.split_once('=').ok_or_else(|| usage(format!("grid '{grid}' must look like name=v1,v2,...")))?;
    let param = match name.trim() {
        "gamma" => SweepParameter::Gamma,
        "bag-size" | "bag_size" | "K" | "k" => SweepParameter::BagSize,
        "delta" => SweepParameter::Delta,
        other => return Err(usage(format!("cannot sweep '{other}'; use gamma, bag-size or delta"))),
    };
    let values = values
        .split(',')
        .map(|v| {
            let v = v.trim();
            if v.contains('=') {
                return Err(usage("a sweep varies one hyperparameter at a time"));
            }
            v.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| usage(format!("grid value '{v}' is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if param == SweepParameter::BagSize && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
        return Err(usage("bag-size values must be positive integers"));
    }
    Ok((param, values))
}

#[derive(Serialize)]
struct SweepRow {
    value: f64,
    auc_mean: f64,
    auc_max: f64,
    best_equation: String,
}

pub fn cmd_sweep(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let (param, values) = parse_grid(&cfg.grid)?;
    let (train, test) = eval_split(cfg)?;
    let base = cfg.hyperparameters();
    let mut rows = Vec::with_capacity(values.len());
    for v in values {
        let mut hp = base.clone();
        match param {
            SweepParameter::Gamma => hp.gamma = v,
            SweepParameter::BagSize => hp.bag_size = v as usize,
            SweepParameter::Delta => hp.delta = v,
        }
        let report = run_experiment(&train, &test, &hp)?;
        rows.push(SweepRow {
            value: v,
            auc_mean: report.auc_mean,
            auc_max: report.auc_max,
            best_equation: report.equations.first().map(|e| e.equation.clone()).unwrap_or_default(),
        });
    }
    let name = match param {
        SweepParameter::Gamma => "gamma",
        SweepParameter::BagSize => "bag-size",
        SweepParameter::Delta => "delta",
    };
    let text = match cfg.format {
        OutputFormat::Json => to_json(&serde_json::json!({ "parameter": param, "rows": rows })),
        OutputFormat::Text => {
            let mut s = format!("{name:>10} | {:>8} | {:>8} | best equation\n", "AUC mean", "AUC max");
            for r in &rows {
                s.push_str(&format!(
                    "{:>10} | {:>8.2} | {:>8.2} | {}\n",
                    r.value,
                    100.0 * r.auc_mean,
                    100.0 * r.auc_max,
                    r.best_equation
                ));
            }
            s
        }
    };
    emit(cfg, out, &text)
}

/// Runs the configured subcommand and returns the process exit status.
pub fn run(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    // Output is buffered so the command can run inside a dedicated pool.
    let mut buf = Vec::new();
    let go = |buf: &mut Vec<u8>| match cfg.command {
        Command::Fit => cmd_fit(cfg, buf),
        Command::Score => cmd_score(cfg, buf),
        Command::Eval => cmd_eval(cfg, buf),
        Command::Inspect => cmd_inspect(cfg, buf),
        Command::DemoKepler => cmd_demo_kepler(cfg, buf),
        Command::Sweep => cmd_sweep(cfg, buf),
    };
    let result = match cfg.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| go(&mut buf)),
            Err(e) => Err(usage(format!("cannot start {n} workers: {e}"))),
        },
        None => go(&mut buf),
    };
    let result = result.and_then(|()| Ok(out.write_all(&buf)?));
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Parses `args` (including the program name) and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match RunConfig::try_parse_from(args) {
        Ok(cfg) => run(&cfg, &mut io::stdout().lock(), &mut io::stderr().lock()),
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}
