//! Learns invariants of the 13-body orbit table and counts how many are
//! rearrangements of `T^2 / a^3`.
//!
//!     cargo run --release --example kepler_rediscovery -- [members] [seed]

use std::time::Instant;

use syran::cli::{KEPLER_SAMPLES, KEPLER_TOLERANCE};
use syran::data::kepler_dataset;
use syran::ensemble::{fit, Hyperparameters};
use syran::eval::kepler_equivalence_rate;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let members = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0);

    let hp = Hyperparameters { ensemble_size: members, master_seed: seed, ..Hyperparameters::default() };
    let started = Instant::now();
    let model = fit(&kepler_dataset(), &hp)?;
    let elapsed = started.elapsed();

    let mut ranked: Vec<_> = model.members.iter().collect();
    ranked.sort_by(|a, b| a.train_loss.total.total_cmp(&b.train_loss.total));
    for m in ranked {
        println!("{:>9.6}  {}", m.train_loss.total, m.equation(&model.feature_names));
    }
    let rate = kepler_equivalence_rate(&model, KEPLER_TOLERANCE, KEPLER_SAMPLES, seed);
    println!("\nKepler-equivalent: {:.0}% of {members}", 100.0 * rate);
    println!("{:.1}s total, {:.2}s per invariant", elapsed.as_secs_f64(), elapsed.as_secs_f64() / members as f64);
    Ok(())
}
