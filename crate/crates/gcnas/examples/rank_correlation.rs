//! The rank-correlation protocol at reduced size: scratch-train a pool of
//! subnets for ground truth, estimate the same subnets under one-shot and
//! partitioned weight sharing, and compare Kendall/Spearman scores.
//!
//! ```bash
//! cargo run --release -p gcnas --example rank_correlation
//! ```

use gcnas::harness::{rank_correlation_experiment, ExperimentConfig, PartitionMethod};

fn main() -> gcnas::Result<()> {
    let mut cfg = ExperimentConfig::default();
    // Smaller than the acceptance protocol so the demo stays in the
    // couple-of-minutes range.
    cfg.protocol.num_rank_subnets = 12;
    cfg.protocol.seeds = vec![101, 102];
    cfg.protocol.methods =
        vec![PartitionMethod::Gc, PartitionMethod::None, PartitionMethod::Fs, PartitionMethod::Random];

    let start = std::time::Instant::now();
    let result = rank_correlation_experiment(&cfg)?;
    println!(
        "{} subnets, {} seeds, ground-truth accuracy spread per seed: {:?}",
        result.num_subnets,
        cfg.protocol.seeds.len(),
        result.ground_truth_spread.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>()
    );
    for m in &result.per_method {
        println!(
            "{:>6}: Kendall {:+.3} ± {:.3}   Spearman {:+.3} ± {:.3}   (per-seed tau {:?})",
            m.method,
            m.mean_tau,
            m.std_tau,
            m.mean_rho,
            m.std_rho,
            m.taus.iter().map(|t| format!("{t:+.2}")).collect::<Vec<_>>()
        );
    }
    println!("finished in {:.1?}", start.elapsed());
    Ok(())
}
