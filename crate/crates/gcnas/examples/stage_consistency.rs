//! Cut-weight ranking stability: collect gradient contributions at early,
//! middle, and late training windows of one run and compare the per-layer
//! cut-weight rankings.
//!
//! ```bash
//! cargo run --release -p gcnas --example stage_consistency
//! ```

use gcnas::harness::{stage_consistency_experiment, ExperimentConfig};

fn main() -> gcnas::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.supernet.layers = 6;

    let start = std::time::Instant::now();
    let result = stage_consistency_experiment(&cfg)?;
    for (stage, gammas) in ["early", "mid", "late"].iter().zip(&result.gammas) {
        println!(
            "{stage:>5} (epoch {:>2}): cut weights {:?}",
            result.window_epochs[["early", "mid", "late"].iter().position(|s| s == stage).unwrap()],
            gammas.iter().map(|g| format!("{g:+.3}")).collect::<Vec<_>>()
        );
    }
    println!(
        "Kendall tau of rankings: early/mid {:+.3}, early/late {:+.3}, mid/late {:+.3}",
        result.tau_early_mid, result.tau_early_late, result.tau_mid_late
    );
    println!("finished in {:.1?}", start.elapsed());
    Ok(())
}
