//! The file-based workflow: CSV in, model file out, model file back in,
//! scores out. The same steps back the `fit` and `score` subcommands.
//!
//!     cargo run --release --example csv_round_trip

use syran::data::{kepler_dataset, load_csv, write_csv};
use syran::ensemble::{fit, EnsembleModel, Hyperparameters};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("syran-csv-example");
    std::fs::create_dir_all(&dir)?;
    let csv = dir.join("orbits.csv");
    let model_path = dir.join("orbits.model.json");

    write_csv(&kepler_dataset(), &csv)?;
    let train = load_csv(&csv, None)?;

    let hp = Hyperparameters { ensemble_size: 5, ..Hyperparameters::default() };
    fit(&train, &hp)?.save(&model_path)?;

    let model = EnsembleModel::load(&model_path)?;
    let scores = model.score(train.rows())?;
    println!("model: {}", model_path.display());
    for (r, s) in train.rows().rows().zip(&scores) {
        println!("T={:>9.4} a={:>8.4}  score {:.4}", r[0], r[1], s);
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    println!("mean training score {mean:.4}");
    Ok(())
}
