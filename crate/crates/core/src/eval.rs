//! Measurement: AUC-ROC, Kepler-equivalence counting and experiment reports.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{kepler_dataset, Dataset};
use crate::ensemble::{fit, EnsembleError, EnsembleModel, Hyperparameters, InvariantModel};
use crate::expr::{numeric_equivalence, sample_points, Expression, Node};
use crate::objective::feature_ranges;
use crate::rng::stream;

/// Members whose values vary less than this (relative) over the sample
/// points are treated as constants and never count as Kepler forms.
const CONSTANT_SPREAD: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("AUC-ROC needs both normal and anomalous samples")]
    SingleClass,
    #[error("test set has no labels")]
    NoLabels,
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Area under the ROC curve: the probability that a random anomaly scores
/// above a random normal point, ties counting one half. Midranks make this
/// O(n log n).
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch { scores: scores.len(), labels: labels.len() });
    }
    let positives = labels.iter().filter(|l| **l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(Ordering::Equal));

    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their mean
        let midrank = (i + 1 + j) as f64 / 2.0;
        let tied_positives = order[i..j].iter().filter(|&&k| labels[k]).count();
        rank_sum += midrank * tied_positives as f64;
        i = j;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

fn kepler_core() -> Node {
    // T^2 / a^3 over inputs (T, a)
    let t = || Node::feature(0);
    let a = || Node::feature(1);
    (t() * t()) / (a() * (a() * a()))
}

/// `alpha * (T^2/a^3)^p + beta`.
fn kepler_target(power: i32, alpha: f64, beta: f64) -> Expression {
    let core = match power {
        1 => kepler_core(),
        p => kepler_core().pow(Node::constant(p as f64)),
    };
    let node = Node::constant(alpha) * core + Node::constant(beta);
    Expression::new(node, 2).expect("Kepler target is well formed")
}

/// Powers of `T^2/a^3` admitted as simple rearrangements.
pub const KEPLER_POWERS: [i32; 4] = [-2, -1, 1, 2];

/// Least-squares `(alpha, beta)` for `y ~ alpha * u + beta`.
fn affine_fit(u: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut suu = 0.0;
    let mut suy = 0.0;
    for (a, b) in u.iter().zip(y) {
        suu += (a - mu) * (a - mu);
        suy += (a - mu) * (b - my);
    }
    if suu.is_nan() || suu <= 0.0 {
        return None;
    }
    let alpha = suy / suu;
    let beta = my - alpha * mu;
    (alpha.is_finite() && beta.is_finite()).then_some((alpha, beta))
}

/// True when `expr` (over inputs `(T, a)`) equals `alpha * (T^2/a^3)^p + beta`
/// for some admitted `p`, with `alpha` and `beta` fitted by least squares on
/// the sample points.
pub fn is_kepler_form(expr: &Expression, domain: &[(f64, f64)], tol: f64, samples: usize, seed: u64) -> bool {
    if expr.dimension() != 2 {
        return false;
    }
    let points = sample_points(domain, samples, &mut stream(&[seed]));
    let values: Vec<(usize, f64)> =
        points.iter().enumerate().filter_map(|(i, p)| expr.evaluate(p).ok().map(|v| (i, v))).collect();
    if values.len() < 2 {
        return false;
    }
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| (lo.min(*v), hi.max(*v)));
    let scale = values.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
    if hi - lo <= CONSTANT_SPREAD * scale {
        return false;
    }
    KEPLER_POWERS.iter().any(|&p| {
        let base = kepler_target(p, 1.0, 0.0);
        let (u, y): (Vec<f64>, Vec<f64>) =
            values.iter().filter_map(|&(i, v)| base.evaluate(&points[i]).ok().map(|b| (b, v))).unzip();
        let Some((alpha, beta)) = affine_fit(&u, &y) else {
            return false;
        };
        let target = kepler_target(p, alpha, beta);
        // same seed, so the same points the fit saw
        numeric_equivalence(expr, &target, domain, samples, tol, &mut stream(&[seed]))
    })
}

/// Share of members that are Kepler forms on the box spanned by the
/// training data's `(T, a)` ranges.
pub fn kepler_equivalence_rate(model: &EnsembleModel, tol: f64, samples: usize, seed: u64) -> f64 {
    if model.dimension != 2 {
        return 0.0;
    }
    let ranges = kepler_domain();
    let hits = model.members.iter().filter(|m| member_is_kepler(m, &ranges, tol, samples, seed)).count();
    hits as f64 / model.members.len() as f64
}

/// `(T, a)` ranges of the embedded orbit table.
pub fn kepler_domain() -> Vec<(f64, f64)> {
    feature_ranges(kepler_dataset().rows()).expect("embedded table is non-empty").as_slice().to_vec()
}

fn member_is_kepler(m: &InvariantModel, domain: &[(f64, f64)], tol: f64, samples: usize, seed: u64) -> bool {
    // members that use only one of T, a cannot be Kepler forms
    m.subset == [0, 1] && is_kepler_form(&m.expression, domain, tol, samples, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSummary {
    pub member: usize,
    pub equation: String,
    pub complexity: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc_mean: f64,
    pub auc_per_member: Vec<f64>,
    pub auc_max: f64,
    /// Sorted by member AUC, best first.
    pub equations: Vec<EquationSummary>,
    pub runtime_seconds: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report is always serializable");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ensemble AUC-ROC: {:.4}", self.auc_mean);
        let _ = writeln!(s, "best member AUC-ROC: {:.4}", self.auc_max);
        let _ = writeln!(s, "runtime: {:.2}s", self.runtime_seconds);
        let _ = writeln!(s, "{:>6}  {:>7}  {:>10}  equation", "member", "auc", "complexity");
        for e in &self.equations {
            let _ = writeln!(s, "{:>6}  {:>7.4}  {:>10}  {}", e.member, e.auc, e.complexity, e.equation);
        }
        s
    }

    /// The same report with the wall-clock field zeroed, for comparisons.
    pub fn without_runtime(&self) -> EvalReport {
        EvalReport { runtime_seconds: 0.0, ..self.clone() }
    }
}

/// Scores an already fitted model on a labelled test set.
pub fn evaluate_model(model: &EnsembleModel, test: &Dataset) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    let labels = test.labels().ok_or(EvalError::NoLabels)?;
    let scores = model.score(test.rows())?;
    let auc_mean = auc_roc(&scores, labels)?;
    let auc_per_member = model
        .members
        .iter()
        .map(|m| {
            let s: Vec<f64> = test.rows().rows().map(|r| m.score(r)).collect();
            auc_roc(&s, labels)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let auc_max = auc_per_member.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut equations: Vec<EquationSummary> = model
        .members
        .iter()
        .enumerate()
        .map(|(i, m)| EquationSummary {
            member: i,
            equation: m.equation(&model.feature_names),
            complexity: m.expression.complexity(),
            auc: auc_per_member[i],
        })
        .collect();
    equations.sort_by(|a, b| b.auc.total_cmp(&a.auc).then(a.member.cmp(&b.member)));
    Ok(EvalReport { auc_mean, auc_per_member, auc_max, equations, runtime_seconds: started.elapsed().as_secs_f64() })
}

/// Fits on `train`, then scores the labelled `test` set with the ensemble
/// and with every member alone.
pub fn run_experiment(train: &Dataset, test: &Dataset, hp: &Hyperparameters) -> Result<EvalReport, EvalError> {
    if test.labels().is_none() {
        return Err(EvalError::NoLabels);
    }
    let started = Instant::now();
    let model = fit(train, hp)?;
    let report = evaluate_model(&model, test)?;
    Ok(EvalReport { runtime_seconds: started.elapsed().as_secs_f64(), ..report })
}
