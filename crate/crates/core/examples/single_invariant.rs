//! One invariant by hand: build the training context with its noise
//! background, run the evolutionary search, and break down the loss.
//!
//!     cargo run --release --example single_invariant -- [evaluations]

use syran::data::kepler_dataset;
use syran::evolve::{evolve, EvolutionConfig};
use syran::expr::parse;
use syran::objective::{feature_ranges, sample_noise, total_loss, TrainingContext};
use syran::rng::stream;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let evaluations = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(30_000);
    let data = kepler_dataset();
    let noise = sample_noise(&feature_ranges(data.rows())?, data.nrows(), &mut stream(&[42]))?;
    let ctx = TrainingContext::new(data.rows().clone(), noise, 1.0, 0.1)?;

    let baseline = total_loss(&parse("1", 2)?, &ctx);
    println!("constant 1: {baseline:?}");

    let config = EvolutionConfig { evaluations, seed: 42, ..EvolutionConfig::default() };
    let result = evolve(&ctx, &config)?;
    println!("best: {}", result.best.to_text_named(syran::expr::TextFormat::Infix, data.feature_names()));
    println!("loss: {:?}", result.best_loss);
    println!("{} candidates over {} generations", result.evaluations, result.loss_trace.len());
    for (g, loss) in result.loss_trace.iter().enumerate().step_by((result.loss_trace.len() / 10).max(1)) {
        println!("  generation {g:>4}: {loss:.6}");
    }
    Ok(())
}
