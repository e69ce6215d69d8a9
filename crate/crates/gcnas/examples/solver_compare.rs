//! Run the search pipeline under the exact brute-force cut solver and the
//! shifted Stoer-Wagner heuristic with shared seeds, and compare outcomes.
//!
//! ```bash
//! cargo run --release -p gcnas --example solver_compare
//! ```

use gcnas::harness::{solver_comparison_experiment, ExperimentConfig};

fn main() -> gcnas::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.search.ga.fine_tune_epochs = 3;

    let start = std::time::Instant::now();
    let result = solver_comparison_experiment(&cfg)?;
    for row in &result.rows {
        println!(
            "{:>22}: chosen layers {:?}, best mask {}, test accuracy {:.4}",
            row.solver, row.chosen_layers, row.best_mask, row.best_metric
        );
        println!(
            "{:>22}  per-layer cut weights {:?}",
            "",
            row.cut_weights.iter().map(|w| format!("{w:+.3}")).collect::<Vec<_>>()
        );
    }
    println!("metric gap {:.4} ({:.1?} total)", result.metric_gap, start.elapsed());
    Ok(())
}
