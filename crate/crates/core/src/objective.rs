//! Training loss for a single candidate invariant.
//!
//! The loss combines three terms:
//!
//! - `l1`, the mean absolute deviation from 1 on the training rows;
//! - a hinge `max(0, delta - l_noise)` where `l_noise` is the same deviation
//!   measured on a uniform noise background, which rules out expressions
//!   that are 1 everywhere;
//! - `gamma * l_c` with `l_c = ln(1 + ln(1 + complexity))`.
//!
//! Rows on which the expression faults are excluded from the means and
//! charged separately as `fault_fraction * FAULT_PENALTY_WEIGHT`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expression;
use crate::matrix::Matrix;

/// Per-unit-fraction charge for rows on which an expression faults.
pub const FAULT_PENALTY_WEIGHT: f64 = 10.0;
/// Loss assigned when an expression faults on every row.
pub const ALL_FAULT_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("cannot compute feature ranges of an empty matrix")]
    EmptyMatrix,
    #[error("noise sample count must be at least 1")]
    ZeroNoiseCount,
    #[error("training context needs at least one {0} row")]
    EmptyContext(&'static str),
    #[error("train rows have {train} columns but noise rows have {noise}")]
    ColumnMismatch { train: usize, noise: usize },
    #[error("delta must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("gamma must be non-negative and finite, got {0}")]
    InvalidGamma(f64),
}

/// Columnwise `(min, max)` over the training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanges(Vec<(f64, f64)>);

impl FeatureRanges {
    pub fn new(ranges: Vec<(f64, f64)>) -> Self {
        assert!(ranges.iter().all(|(lo, hi)| lo <= hi), "min must not exceed max");
        Self(ranges)
    }

    pub fn as_slice(&self) -> &[(f64, f64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn feature_ranges(rows: &Matrix) -> Result<FeatureRanges, ObjectiveError> {
    if rows.nrows() == 0 {
        return Err(ObjectiveError::EmptyMatrix);
    }
    let ranges = (0..rows.ncols())
        .map(|j| rows.column(j).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v))))
        .collect();
    Ok(FeatureRanges(ranges))
}

/// Samples `count` rows with every feature drawn independently and uniformly
/// from its range.
pub fn sample_noise<R: Rng + ?Sized>(
    ranges: &FeatureRanges,
    count: usize,
    rng: &mut R,
) -> Result<Matrix, ObjectiveError> {
    if count == 0 {
        return Err(ObjectiveError::ZeroNoiseCount);
    }
    let mut data = Vec::with_capacity(count * ranges.len());
    for _ in 0..count {
        for &(lo, hi) in ranges.as_slice() {
            data.push(if hi > lo { rng.random_range(lo..=hi) } else { lo });
        }
    }
    Ok(Matrix::from_flat(ranges.len(), data))
}

/// Mean `|f(x) - 1|` over the rows on which `f` evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviationSummary {
    /// Mean over fault-free rows; [`ALL_FAULT_LOSS`] if every row faulted.
    pub value: f64,
    pub fault_fraction: f64,
    pub faults: usize,
}

pub fn mean_abs_deviation(expr: &Expression, rows: &Matrix) -> DeviationSummary {
    assert!(rows.nrows() > 0, "mean deviation over zero rows");
    let mut sum = 0.0;
    let mut ok = 0usize;
    for r in rows.rows() {
        if let Ok(v) = expr.evaluate(r) {
            sum += (v - 1.0).abs();
            ok += 1;
        }
    }
    let n = rows.nrows();
    let faults = n - ok;
    let value = if ok == 0 { ALL_FAULT_LOSS } else { sum / ok as f64 };
    DeviationSummary {
        // a finite sum of finite terms can still overflow
        value: if value.is_finite() { value } else { ALL_FAULT_LOSS },
        fault_fraction: faults as f64 / n as f64,
        faults,
    }
}

/// `ln(1 + ln(1 + c))`.
pub fn complexity_penalty(complexity: f64) -> f64 {
    (1.0 + (1.0 + complexity).ln()).ln()
}

/// Everything needed to score candidates for one ensemble member.
#[derive(Debug, Clone)]
pub struct TrainingContext {
    train: Matrix,
    noise: Matrix,
    delta: f64,
    gamma: f64,
}

impl TrainingContext {
    pub fn new(train: Matrix, noise: Matrix, delta: f64, gamma: f64) -> Result<Self, ObjectiveError> {
        if train.nrows() == 0 {
            return Err(ObjectiveError::EmptyContext("train"));
        }
        if noise.nrows() == 0 {
            return Err(ObjectiveError::EmptyContext("noise"));
        }
        if train.ncols() != noise.ncols() {
            return Err(ObjectiveError::ColumnMismatch { train: train.ncols(), noise: noise.ncols() });
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(ObjectiveError::InvalidDelta(delta));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(ObjectiveError::InvalidGamma(gamma));
        }
        Ok(Self { train, noise, delta, gamma })
    }

    pub fn train(&self) -> &Matrix {
        &self.train
    }

    pub fn noise(&self) -> &Matrix {
        &self.noise
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dimension(&self) -> usize {
        self.train.ncols()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l_noise: f64,
    pub hinge: f64,
    pub l_c: f64,
    pub total: f64,
    pub fault_fraction: f64,
}

pub fn total_loss(expr: &Expression, ctx: &TrainingContext) -> LossBreakdown {
    assert_eq!(expr.dimension(), ctx.dimension(), "expression/context dimension mismatch");
    let train = mean_abs_deviation(expr, &ctx.train);
    let noise = mean_abs_deviation(expr, &ctx.noise);
    let hinge = (ctx.delta - noise.value).max(0.0);
    let l_c = complexity_penalty(expr.complexity());
    let rows = ctx.train.nrows() + ctx.noise.nrows();
    let fault_fraction = (train.faults + noise.faults) as f64 / rows as f64;

    let total = if train.faults == ctx.train.nrows() {
        ALL_FAULT_LOSS
    } else {
        let base = train.value + hinge + ctx.gamma * l_c;
        if fault_fraction > 0.0 {
            base + fault_fraction * FAULT_PENALTY_WEIGHT
        } else {
            base
        }
    };
    LossBreakdown { l1: train.value, l_noise: noise.value, hinge, l_c, total, fault_fraction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, Node};
    use crate::rng::stream;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(2, rows).unwrap()
    }

    fn constant(v: f64) -> Expression {
        Expression::new(Node::constant(v), 2).unwrap()
    }

    #[test]
    fn ranges_are_columnwise_extremes() {
        let r = feature_ranges(&m(&[[1.0, 5.0], [3.0, 2.0]])).unwrap();
        assert_eq!(r.as_slice(), &[(1.0, 3.0), (2.0, 5.0)]);
        let r = feature_ranges(&m(&[[7.0, 7.0]])).unwrap();
        assert_eq!(r.as_slice(), &[(7.0, 7.0), (7.0, 7.0)]);
        assert_eq!(feature_ranges(&Matrix::empty(2)), Err(ObjectiveError::EmptyMatrix));
    }

    #[test]
    fn noise_sampling() {
        let zero = FeatureRanges::new(vec![(0.0, 0.0)]);
        let s = sample_noise(&zero, 5, &mut stream(&[0])).unwrap();
        assert_eq!(s.nrows(), 5);
        assert!(s.as_slice().iter().all(|&v| v == 0.0));

        let unit = FeatureRanges::new(vec![(0.0, 1.0), (0.0, 1.0)]);
        let s = sample_noise(&unit, 10_000, &mut stream(&[1])).unwrap();
        for j in 0..2 {
            let mean = s.column(j).sum::<f64>() / 10_000.0;
            assert!((mean - 0.5).abs() < 0.02, "column {j} mean {mean}");
        }
        assert_eq!(sample_noise(&unit, 0, &mut stream(&[2])).unwrap_err(), ObjectiveError::ZeroNoiseCount);

        let a = sample_noise(&unit, 20, &mut stream(&[3])).unwrap();
        let b = sample_noise(&unit, 20, &mut stream(&[3])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deviation_of_constants() {
        let rows = m(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let d = mean_abs_deviation(&constant(1.0), &rows);
        assert_eq!((d.value, d.fault_fraction), (0.0, 0.0));
        let d = mean_abs_deviation(&constant(3.0), &rows);
        assert_eq!((d.value, d.fault_fraction), (2.0, 0.0));
    }

    #[test]
    fn deviation_skips_faulted_rows() {
        // 1/(x0 - 1): faults on the first row only
        let e = parse("(div 1 (sub x0 1))", 2).unwrap();
        let rows = m(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]);
        let d = mean_abs_deviation(&e, &rows);
        assert_eq!(d.faults, 1);
        assert!((d.fault_fraction - 1.0 / 3.0).abs() < 1e-15);
        // |1 - 1| and |0.5 - 1|
        assert!((d.value - 0.25).abs() < 1e-15);

        let always = parse("(div 1 (sub x0 x0))", 2).unwrap();
        let d = mean_abs_deviation(&always, &rows);
        assert_eq!((d.value, d.fault_fraction), (ALL_FAULT_LOSS, 1.0));
    }

    #[test]
    fn constant_one_loss_is_analytic() {
        let rows = m(&[[1.0, 2.0], [3.0, 4.0]]);
        let ctx = TrainingContext::new(rows.clone(), rows, 1.0, 0.1).unwrap();
        let l = total_loss(&constant(1.0), &ctx);
        let l_c = (1.0 + 2f64.ln()).ln();
        assert_eq!(l.l1, 0.0);
        assert_eq!(l.l_noise, 0.0);
        assert_eq!(l.hinge, 1.0);
        assert!((l.l_c - 0.526_589_034_5).abs() < 1e-9);
        assert!(((l.l_c - l_c) / l_c).abs() < 1e-12);
        assert!(((l.total - (1.0 + 0.1 * l_c)) / l.total).abs() < 1e-12);
        assert!((l.total - 1.0527).abs() < 1e-4);
    }

    #[test]
    fn hinge_vanishes_beyond_margin() {
        // x0 is 1 on train, 5 on noise
        let train = m(&[[1.0, 0.0], [1.0, 1.0]]);
        let noise = m(&[[5.0, 0.0], [5.0, 1.0]]);
        let ctx = TrainingContext::new(train, noise, 1.0, 0.0).unwrap();
        let e = parse("x0", 2).unwrap();
        let l = total_loss(&e, &ctx);
        assert_eq!(l.hinge, 0.0);
        assert_eq!(l.total, l.l1);
        assert_eq!(l.total, 0.0);
    }

    #[test]
    fn faults_are_charged() {
        let train = m(&[[1.0, 0.0], [2.0, 0.0]]);
        let ctx = TrainingContext::new(train.clone(), train, 1.0, 0.0).unwrap();
        let e = parse("(div 1 (sub x0 1))", 2).unwrap();
        let l = total_loss(&e, &ctx);
        assert_eq!(l.fault_fraction, 0.5);
        assert!((l.total - (l.l1 + l.hinge + 5.0)).abs() < 1e-12);

        let never = parse("(div 1 (sub x0 x0))", 2).unwrap();
        assert_eq!(total_loss(&never, &ctx).total, ALL_FAULT_LOSS);
    }

    #[test]
    fn penalty_saturates() {
        assert!(complexity_penalty(100.0) / complexity_penalty(10.0) < 2.0);
        assert!(complexity_penalty(0.0) == 0.0);
    }

    #[test]
    fn context_validation() {
        let rows = m(&[[1.0, 2.0]]);
        assert!(TrainingContext::new(Matrix::empty(2), rows.clone(), 1.0, 0.1).is_err());
        assert!(TrainingContext::new(rows.clone(), Matrix::empty(2), 1.0, 0.1).is_err());
        assert!(TrainingContext::new(rows.clone(), Matrix::from_rows(1, &[[1.0]]).unwrap(), 1.0, 0.1).is_err());
        assert!(TrainingContext::new(rows.clone(), rows.clone(), 0.0, 0.1).is_err());
        assert!(TrainingContext::new(rows.clone(), rows, 1.0, -0.1).is_err());
    }
}
