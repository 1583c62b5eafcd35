//! Unsupervised detection on points near the curve `x0^2 = x1^3`: train on
//! normal points only, then rank a test set that contains 5% anomalies.
//!
//!     cargo run --release --example manifold_anomalies

use syran::data::{manifold_dataset, train_test_split};
use syran::ensemble::{fit, Hyperparameters};
use syran::eval::evaluate_model;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = manifold_dataset(228, 12, 7);
    let (train, test) = train_test_split(&data, 0.5, 7)?;

    let hp = Hyperparameters { ensemble_size: 10, ..Hyperparameters::default() };
    let model = fit(&train, &hp)?;
    let report = evaluate_model(&model, &test)?;

    println!("train rows {}, test rows {}", train.nrows(), test.nrows());
    println!("ensemble AUC {:.3}, best member AUC {:.3}", report.auc_mean, report.auc_max);
    for eq in report.equations.iter().take(3) {
        println!("  {:.3}  {}", eq.auc, eq.equation);
    }

    // the most anomalous test rows according to the ensemble
    let scores = model.score(test.rows())?;
    let labels = test.labels().unwrap_or_default();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    println!("\ntop 5 by score:");
    for &i in order.iter().take(5) {
        let r = test.rows().row(i);
        println!("  score {:.4}  x0={:.3} x1={:.3}  anomaly={}", scores[i], r[0], r[1], labels[i]);
    }
    Ok(())
}
