//! Feature-bagged ensembles of symbolic invariants.
//!
//! Training draws, for every member independently, a random feature subset,
//! a uniform noise background over that subset's empirical ranges, and then
//! evolves one invariant. After training each member is calibrated by its
//! mean deviation on the training rows. A point is scored as
//!
//! ```text
//! score(x) = mean_i sigmoid(|f_i(x_S_i) - 1| / mean_deviation_i)
//! ```
//!
//! which lies in `[0.5, 1)`; higher means more anomalous.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::evolve::{evolve, EvolutionConfig, EvolveError};
use crate::expr::{self, ExprError, Expression, TextFormat};
use crate::matrix::Matrix;
use crate::objective::{feature_ranges, sample_noise, LossBreakdown, ObjectiveError, TrainingContext};
use crate::rng::{derive_seed, stream};

/// Smallest admissible calibration divisor.
pub const MEAN_DEVIATION_FLOOR: f64 = 1e-9;
/// Deviation charged for a point at which a member cannot be evaluated.
pub const FAULT_CEILING: f64 = 1e6;
/// Cap on the noise sample count per member.
pub const MAX_NOISE_ROWS: usize = 2048;
/// Largest `f64` below 1; scores are clamped to it so they stay in `[0.5, 1)`.
pub const SCORE_MAX: f64 = 1.0 - f64::EPSILON / 2.0;

const MODEL_FORMAT: &str = "syran-model";
const MODEL_VERSION: u32 = 1;

const SUBSET_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const EVOLUTION_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("training needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("training data has no features")]
    NoFeatures,
    #[error("row {row}, column {column}: value is not finite")]
    NonFinite { row: usize, column: usize },
    #[error("rows have {found} columns but the model expects {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("member {member}: {source}")]
    Expression {
        member: usize,
        #[source]
        source: ExprError,
    },
    #[error("malformed model: {0}")]
    Malformed(String),
    #[error("model JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// M, the number of invariants.
    pub ensemble_size: usize,
    /// K, features per member; clamped to the data dimension at fit time.
    pub bag_size: usize,
    /// Noise margin of the hinge term.
    pub delta: f64,
    /// Weight of the complexity penalty.
    pub gamma: f64,
    pub evolution: EvolutionConfig,
    pub master_seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self {
            ensemble_size: 50,
            bag_size: 2,
            delta: 1.0,
            gamma: 0.1,
            evolution: EvolutionConfig::default(),
            master_seed: 0,
        }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), EnsembleError> {
        let bad = |m: &str| Err(EnsembleError::InvalidHyperparameters(m.to_string()));
        if self.ensemble_size == 0 {
            return bad("ensemble size must be positive");
        }
        if self.bag_size == 0 {
            return bad("bag size must be positive");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta must be positive");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be non-negative");
        }
        self.evolution.validate()?;
        Ok(())
    }

    /// Seed of member `index`, independent of every other member.
    pub fn member_seed(&self, index: usize) -> u64 {
        derive_seed(&[self.master_seed, index as u64])
    }
}

/// One trained invariant with its feature subset and calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantModel {
    /// Expression over `subset.len()` inputs; input `k` is feature `subset[k]`.
    pub expression: Expression,
    pub subset: Vec<usize>,
    pub mean_deviation: f64,
    pub train_loss: LossBreakdown,
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl InvariantModel {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.subset.iter().map(|&j| x[j]).collect()
    }

    /// `|f(x_S) - 1|`, or [`FAULT_CEILING`] if `f` cannot be evaluated.
    pub fn deviation(&self, x: &[f64]) -> f64 {
        match self.expression.evaluate(&self.project(x)) {
            Ok(v) => (v - 1.0).abs().min(FAULT_CEILING),
            Err(_) => FAULT_CEILING,
        }
    }

    /// Calibrated score `sigmoid(deviation / mean_deviation)` in `[0.5, 1)`.
    pub fn score(&self, x: &[f64]) -> f64 {
        self.score_deviation(self.deviation(x))
    }

    pub fn score_deviation(&self, deviation: f64) -> f64 {
        sigmoid(deviation / self.mean_deviation).min(SCORE_MAX)
    }

    /// Readable equation with dataset column names substituted.
    pub fn equation<S: AsRef<str>>(&self, feature_names: &[S]) -> String {
        let local: Vec<&str> = self.subset.iter().map(|&j| feature_names[j].as_ref()).collect();
        self.expression.to_text_named(TextFormat::Infix, &local)
    }
}

/// Draws `min(bag_size, dimension)` distinct indices, sorted ascending.
pub fn sample_feature_subset<R: Rng + ?Sized>(dimension: usize, bag_size: usize, rng: &mut R) -> Vec<usize> {
    assert!(dimension >= 1);
    let k = bag_size.min(dimension);
    let mut s = rand::seq::index::sample(rng, dimension, k).into_vec();
    s.sort_unstable();
    s
}

fn check_training_data(train: &Dataset) -> Result<(), EnsembleError> {
    if train.nrows() < 2 {
        return Err(EnsembleError::TooFewRows(train.nrows()));
    }
    if train.dimension() == 0 {
        return Err(EnsembleError::NoFeatures);
    }
    for (i, r) in train.rows().rows().enumerate() {
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(EnsembleError::NonFinite { row: i, column: j });
        }
    }
    Ok(())
}

/// Trains member `index` exactly as [`fit`] would, without the others.
pub fn fit_member(train: &Dataset, hp: &Hyperparameters, index: usize) -> Result<InvariantModel, EnsembleError> {
    check_training_data(train)?;
    hp.validate()?;
    fit_member_unchecked(train.rows(), hp, index)
}

fn fit_member_unchecked(rows: &Matrix, hp: &Hyperparameters, index: usize) -> Result<InvariantModel, EnsembleError> {
    let seed = hp.member_seed(index);
    let subset = sample_feature_subset(rows.ncols(), hp.bag_size, &mut stream(&[seed, SUBSET_STREAM]));
    let projected = rows.select_columns(&subset);
    let ranges = feature_ranges(&projected)?;
    let noise_rows = projected.nrows().min(MAX_NOISE_ROWS);
    let noise = sample_noise(&ranges, noise_rows, &mut stream(&[seed, NOISE_STREAM]))?;
    let ctx = TrainingContext::new(projected, noise, hp.delta, hp.gamma)?;
    let config = EvolutionConfig { seed: derive_seed(&[seed, EVOLUTION_STREAM]), ..hp.evolution.clone() };
    let result = evolve(&ctx, &config)?;

    let mean = ctx
        .train()
        .rows()
        .map(|r| match result.best.evaluate(r) {
            Ok(v) => (v - 1.0).abs().min(FAULT_CEILING),
            Err(_) => FAULT_CEILING,
        })
        .sum::<f64>()
        / ctx.train().nrows() as f64;
    Ok(InvariantModel {
        expression: result.best,
        subset,
        mean_deviation: mean.max(MEAN_DEVIATION_FLOOR),
        train_loss: result.best_loss,
    })
}

/// Trains the full ensemble. Labels, if present, are ignored. Members are
/// trained in parallel; the result depends only on the data and `hp`.
pub fn fit(train: &Dataset, hp: &Hyperparameters) -> Result<EnsembleModel, EnsembleError> {
    check_training_data(train)?;
    hp.validate()?;
    let members = (0..hp.ensemble_size)
        .into_par_iter()
        .map(|i| fit_member_unchecked(train.rows(), hp, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EnsembleModel {
        members,
        feature_names: train.feature_names().to_vec(),
        hyperparameters: hp.clone(),
        dimension: train.dimension(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<InvariantModel>,
    pub feature_names: Vec<String>,
    pub hyperparameters: Hyperparameters,
    pub dimension: usize,
}

impl EnsembleModel {
    /// Builds a model from parts, checking subsets against `dimension`.
    pub fn new(
        members: Vec<InvariantModel>,
        feature_names: Vec<String>,
        hyperparameters: Hyperparameters,
        dimension: usize,
    ) -> Result<Self, EnsembleError> {
        if feature_names.len() != dimension {
            return Err(EnsembleError::Malformed(format!(
                "{} feature names for dimension {dimension}",
                feature_names.len()
            )));
        }
        if members.is_empty() {
            return Err(EnsembleError::Malformed("model has no members".into()));
        }
        for (i, m) in members.iter().enumerate() {
            let mut sorted = m.subset.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != m.subset.len() || m.subset.iter().any(|&j| j >= dimension) {
                return Err(EnsembleError::Malformed(format!("member {i} has an invalid subset")));
            }
            if m.subset.len() != m.expression.dimension() {
                return Err(EnsembleError::Malformed(format!(
                    "member {i}: subset size differs from expression dimension"
                )));
            }
            if !(m.mean_deviation >= MEAN_DEVIATION_FLOOR && m.mean_deviation.is_finite()) {
                return Err(EnsembleError::Malformed(format!("member {i} has an invalid mean deviation")));
            }
        }
        Ok(Self { members, feature_names, hyperparameters, dimension })
    }

    pub fn score_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.members.iter().map(|m| m.score(x)).sum();
        (sum / self.members.len() as f64).clamp(0.5, SCORE_MAX)
    }

    pub fn score(&self, rows: &Matrix) -> Result<Vec<f64>, EnsembleError> {
        if rows.ncols() != self.dimension && rows.nrows() > 0 {
            return Err(EnsembleError::WidthMismatch { expected: self.dimension, found: rows.ncols() });
        }
        Ok(rows.rows().map(|r| self.score_row(r)).collect())
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            dimension: self.dimension,
            feature_names: self.feature_names.clone(),
            hyperparameters: self.hyperparameters.clone(),
            members: self
                .members
                .iter()
                .map(|m| MemberRecord {
                    expression: m.expression.to_text(TextFormat::Sexpr),
                    equation: m.equation(&self.feature_names),
                    subset: m.subset.clone(),
                    mean_deviation: m.mean_deviation,
                    train_loss: m.train_loss,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("model is always serializable");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(EnsembleError::Malformed(format!("unexpected format tag '{}'", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(EnsembleError::Malformed(format!("unsupported version {}", file.version)));
        }
        let members = file
            .members
            .into_iter()
            .enumerate()
            .map(|(i, m)| {
                let expression = expr::parse(&m.expression, m.subset.len())
                    .map_err(|source| EnsembleError::Expression { member: i, source })?;
                Ok(InvariantModel {
                    expression,
                    subset: m.subset,
                    mean_deviation: m.mean_deviation,
                    train_loss: m.train_loss,
                })
            })
            .collect::<Result<Vec<_>, EnsembleError>>()?;
        Self::new(members, file.feature_names, file.hyperparameters, file.dimension)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| EnsembleError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|source| EnsembleError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    dimension: usize,
    feature_names: Vec<String>,
    hyperparameters: Hyperparameters,
    members: Vec<MemberRecord>,
}

#[derive(Serialize, Deserialize)]
struct MemberRecord {
    /// s-expression over the member's local inputs `x0..x{K-1}`.
    expression: String,
    /// Informational infix form with column names; ignored on load.
    #[serde(default)]
    equation: String,
    subset: Vec<usize>,
    mean_deviation: f64,
    train_loss: LossBreakdown,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::kepler_dataset;
    use crate::expr::parse;

    fn zero_loss() -> LossBreakdown {
        LossBreakdown { l1: 0.0, l_noise: 0.0, hinge: 0.0, l_c: 0.0, total: 0.0, fault_fraction: 0.0 }
    }

    fn member(text: &str, subset: Vec<usize>, mean_deviation: f64) -> InvariantModel {
        InvariantModel {
            expression: parse(text, subset.len()).unwrap(),
            subset,
            mean_deviation,
            train_loss: zero_loss(),
        }
    }

    fn model(members: Vec<InvariantModel>, dimension: usize) -> EnsembleModel {
        let names = (0..dimension).map(|i| format!("f{i}")).collect();
        EnsembleModel::new(members, names, Hyperparameters::default(), dimension).unwrap()
    }

    #[test]
    fn subsets() {
        let mut rng = stream(&[1]);
        for _ in 0..50 {
            assert_eq!(sample_feature_subset(2, 2, &mut rng), vec![0, 1]);
            assert_eq!(sample_feature_subset(1, 2, &mut rng), vec![0]);
        }
        let mut counts = [0usize; 9];
        for _ in 0..10_000 {
            let s = sample_feature_subset(9, 2, &mut rng);
            assert_eq!(s.len(), 2);
            assert!(s[0] < s[1]);
            for j in s {
                counts[j] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 2.0 / 9.0).abs() < 0.02, "{f}");
        }
    }

    #[test]
    fn constant_member_never_deviates() {
        let m = member("1", vec![0], 0.3);
        for x in [[0.0, 5.0], [1e9, -3.0]] {
            assert_eq!(m.deviation(&x), 0.0);
            assert_eq!(m.score(&x), 0.5);
        }
    }

    #[test]
    fn wine_member() {
        let m = member("(div 1.0759 (sub x0 11.1282))", vec![1], 0.2);
        assert!(m.deviation(&[0.0, 12.2041]) < 1e-12);
        assert_eq!(m.deviation(&[0.0, 11.1282]), FAULT_CEILING);
    }

    #[test]
    fn calibrated_scores() {
        let m = member("x0", vec![0], 0.25);
        assert_eq!(m.score_deviation(0.0), 0.5);
        assert!((m.score_deviation(0.25) - 0.731_058_578_6).abs() < 1e-9);
        assert!((m.score_deviation(2.5) - 0.999_954_602_1).abs() < 1e-9);
        assert!(m.score_deviation(FAULT_CEILING) < 1.0);
    }

    #[test]
    fn ensemble_average() {
        // member 1 always invariant; member 2 deviates by exactly its mean
        let ens = model(vec![member("1", vec![0], 1.0), member("x0", vec![0], 0.5)], 1);
        let s = ens.score(&Matrix::from_rows(1, &[[1.5]]).unwrap()).unwrap();
        assert!((s[0] - 0.615_529_289_3).abs() < 1e-9, "{}", s[0]);

        let all_invariant = model(vec![member("1", vec![0], 1.0), member("(div x0 x0)", vec![0], 1.0)], 1);
        assert_eq!(all_invariant.score_row(&[3.0]), 0.5);

        let err = ens.score(&Matrix::from_rows(2, &[[1.0, 2.0]]).unwrap()).unwrap_err();
        assert!(matches!(err, EnsembleError::WidthMismatch { expected: 1, found: 2 }));
        assert!(ens.score(&Matrix::empty(3)).unwrap().is_empty());
    }

    #[test]
    fn projection_ignores_other_coordinates() {
        let m = member("(mul x0 x1)", vec![0, 2], 1.0);
        let a = m.deviation(&[2.0, 100.0, 3.0]);
        let b = m.deviation(&[2.0, -7.5, 3.0]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a, 5.0);
    }

    #[test]
    fn json_round_trip() {
        let ens = model(
            vec![
                member("(add x0 (abs (sub 1 x0)))", vec![1], 0.123_456_789_012_345_6),
                member("(div (mul x0 x0) (pow x1 3.0000001))", vec![0, 2], 1e-9),
            ],
            3,
        );
        let text = ens.to_json();
        let back = EnsembleModel::from_json(&text).unwrap();
        assert_eq!(back, ens);
        assert_eq!(back.to_json(), text);
        assert!(text.contains("\"f1 + |1 - f1|\""));
    }

    #[test]
    fn malformed_models_are_rejected() {
        let ens = model(vec![member("x0", vec![1], 0.5)], 2);
        let text = ens.to_json();
        assert!(EnsembleModel::from_json(&text.replace("\"syran-model\"", "\"other\"")).is_err());
        assert!(EnsembleModel::from_json(&text.replace("\"x0\"", "\"x3\"")).is_err());
        assert!(EnsembleModel::from_json("{").is_err());
        let bad = InvariantModel { subset: vec![5], ..member("x0", vec![0], 0.5) };
        assert!(EnsembleModel::new(vec![bad], vec!["a".into()], Hyperparameters::default(), 1).is_err());
    }

    #[test]
    fn fit_rejects_degenerate_data() {
        let one = Dataset::unnamed(Matrix::from_rows(2, &[[1.0, 1.0]]).unwrap()).unwrap();
        assert!(matches!(fit(&one, &Hyperparameters::default()), Err(EnsembleError::TooFewRows(1))));
        let hp = Hyperparameters { ensemble_size: 0, ..Hyperparameters::default() };
        assert!(fit(&kepler_dataset(), &hp).is_err());
    }

    fn quick_hp(seed: u64) -> Hyperparameters {
        let mut hp = Hyperparameters { ensemble_size: 3, master_seed: seed, ..Hyperparameters::default() };
        hp.evolution.evaluations = 2_000;
        hp
    }

    #[test]
    fn fit_is_deterministic_and_members_are_independent() {
        let ds = kepler_dataset();
        let hp = quick_hp(5);
        let a = fit(&ds, &hp).unwrap();
        let b = fit(&ds, &hp).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(fit_member(&ds, &hp, 2).unwrap(), a.members[2]);
        for m in &a.members {
            assert_eq!(m.subset, vec![0, 1]);
            assert!(m.mean_deviation >= MEAN_DEVIATION_FLOOR);
        }
    }

    #[test]
    fn calibration_centres_training_deviations() {
        let ds = kepler_dataset();
        let ens = fit(&ds, &quick_hp(8)).unwrap();
        for m in &ens.members {
            let mean: f64 = ds.rows().rows().map(|r| m.deviation(r)).sum::<f64>() / ds.nrows() as f64;
            if mean >= MEAN_DEVIATION_FLOOR {
                assert!((mean / m.mean_deviation - 1.0).abs() < 1e-12);
            }
        }
    }
}
