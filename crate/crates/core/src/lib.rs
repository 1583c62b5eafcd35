//! Unsupervised anomaly detection with ensembles of symbolic invariants.
//!
//! Each ensemble member is a closed-form expression over a small random
//! subset of the input features, evolved so that it evaluates to
//! approximately `1` on normal training data while deviating from `1` on a
//! uniform noise background. Test points are scored by how far they push the
//! members away from `1`, calibrated per member and averaged.
//!
//! The crate is organised bottom-up:
//!
//! - [`expr`]: expression trees, evaluation, complexity and text formats.
//! - [`objective`]: the per-invariant training loss and noise sampling.
//! - [`evolve`]: tree-based evolutionary search minimizing that loss.
//! - [`ensemble`]: feature-bagged training, calibration and scoring.
//! - [`data`]: CSV ingestion and the embedded Kepler orbit table.
//! - [`eval`]: AUC-ROC, Kepler-equivalence counting and experiment reports.
//! - [`cli`]: the `syran` command-line front end.
//!
//! ```
//! use syran::data::kepler_dataset;
//! use syran::ensemble::{fit, Hyperparameters};
//!
//! let train = kepler_dataset();
//! let mut hp = Hyperparameters::default();
//! hp.ensemble_size = 2;
//! hp.evolution.evaluations = 2_000;
//! let model = fit(&train, &hp).unwrap();
//! let scores = model.score(train.rows()).unwrap();
//! assert!(scores.iter().all(|s| (0.5..1.0).contains(s)));
//! ```

pub mod cli;
pub mod data;
pub mod ensemble;
pub mod eval;
pub mod evolve;
pub mod expr;
pub mod matrix;
pub mod objective;
pub mod rng;

pub use data::Dataset;
pub use ensemble::{EnsembleModel, Hyperparameters, InvariantModel};
pub use evolve::EvolutionConfig;
pub use expr::{Expression, Node};
pub use matrix::Matrix;
