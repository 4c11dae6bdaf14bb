//! Fit the sine-product surface and print a summary.
//!
//! cargo run --release -p nodeharvest --example sine -- [n] [seed]

use std::time::Instant;

use nodeharvest::data::mean;
use nodeharvest::synth::sine_sample;
use nodeharvest::{fit, FitConfig};

fn main() -> nodeharvest::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);
    let sample = sine_sample(n, seed)?;
    let ds = sample.dataset();

    let start = Instant::now();
    let model = fit(&ds, &FitConfig { seed, ..FitConfig::default() })?;
    let elapsed = start.elapsed().as_secs_f64();

    let d = &model.diagnostics;
    println!("n = {n}, q = {}, trees = {}, nullspace dim = {}", model.q(), d.trees_grown, d.nullspace_dim);
    println!("solver: {:?} after {} iterations", d.status, d.iterations);
    println!("selected nodes: {}, fit time {elapsed:.2}s", d.nonzero_nodes);

    let pred = model.predict_dataset(&ds)?;
    let err: Vec<f64> = pred.iter().zip(&sample.signal).map(|(p, s)| (p - s) * (p - s)).collect();
    println!("mean squared error against the noiseless surface: {:.4}", mean(&err));
    println!("heaviest nodes:");
    let mut top = model.selected_nodes(1e-8);
    top.sort_by(|a, b| b.weight.total_cmp(&a.weight));
    for s in top.iter().take(8) {
        println!("  {:>7.4}  {:>5}  {:+.3}  {}", s.weight, s.rule.size, s.rule.mean, s.rule.describe(&model.schema));
    }
    Ok(())
}
