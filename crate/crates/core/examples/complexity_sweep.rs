//! Varies the complexity weight and reports detection quality together with
//! the best member's equation, one row per weight.
//!
//!     cargo run --release --example complexity_sweep

use syran::data::{manifold_dataset, train_test_split};
use syran::ensemble::Hyperparameters;
use syran::eval::run_experiment;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = manifold_dataset(190, 10, 3);
    let (train, test) = train_test_split(&data, 0.5, 3)?;

    println!("{:>6} | {:>8} | {:>8} | best equation", "gamma", "AUC mean", "AUC max");
    for gamma in [0.001, 0.01, 0.1, 0.5] {
        let hp = Hyperparameters { gamma, ensemble_size: 8, ..Hyperparameters::default() };
        let r = run_experiment(&train, &test, &hp)?;
        let best = r.equations.first().map(|e| e.equation.as_str()).unwrap_or("");
        println!("{gamma:>6} | {:>8.2} | {:>8.2} | {best}", 100.0 * r.auc_mean, 100.0 * r.auc_max);
    }
    Ok(())
}
