//! Command-line entry point. Each subcommand runs one self-contained,
//! seeded pipeline and writes its artifacts under the output directory.
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde_json::json;

use gcnas::data::{generate_sbm, save_dataset, Split};
use gcnas::harness::{
    aggregate_reports, rank_correlation_experiment, search_darts_pipeline, search_ga_pipeline,
    solver_comparison_experiment, stage_consistency_experiment, write_summary, write_toml,
    ExperimentConfig, ResultsRecord,
};
use gcnas::supernet::{
    accuracy, save_checkpoint, train_supernet, PreparedData, SubnetMask, Supernet,
};
use gcnas::Error;

#[derive(Parser)]
#[command(
    name = "gcnas",
    version,
    about = "Few-shot graph NAS with gradient-contribution supernet partitioning"
)]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every stage seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for reports and checkpoints.
    #[arg(long, global = true, default_value = "gcnas-out")]
    out: PathBuf,
    /// Worker threads for parallel stages (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset and write it in the binary format.
    GenData,
    /// Train the dense supernet and save a checkpoint.
    TrainSupernet,
    /// Train, decompose gradients, partition, and derive sub-supernets.
    Partition,
    /// Subnet search over the (sub-)supernets.
    Search {
        #[command(subcommand)]
        strategy: SearchCmd,
    },
    /// Rank-correlation protocol comparing partition methods.
    RankCorr,
    /// Cut-weight ranking consistency across training stages.
    StageConsistency,
    /// Full pipeline under each min-cut solver, metrics side by side.
    SolverCompare,
    /// Aggregate all summaries in the output directory into report.json.
    Report,
}

#[derive(Subcommand)]
enum SearchCmd {
    /// Genetic-algorithm search.
    Ga,
    /// Differentiable search with argmax extraction.
    Darts,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Usage and parse problems are configuration errors.
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err @ (Error::Config(_) | Error::InvalidArg(_))) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> gcnas::Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.override_seed(seed);
    }
    let out = cli.out.as_path();
    std::fs::create_dir_all(out)?;
    let started = Instant::now();

    match cli.command {
        Command::GenData => {
            let dataset = generate_sbm(&cfg.data)?;
            let path = out.join("dataset.bin");
            save_dataset(&dataset, &path)?;
            let record = ResultsRecord::new(
                "gen-data",
                &cfg,
                json!({
                    "graphs": dataset.graphs.len(),
                    "train": dataset.manifest.train.len(),
                    "valid": dataset.manifest.valid.len(),
                    "test": dataset.manifest.test.len(),
                }),
            )
            .with_timing("total", started.elapsed().as_secs_f64());
            write_summary(out, &record)?;
            println!("dataset written to {}", path.display());
        }
        Command::TrainSupernet => {
            let dataset = generate_sbm(&cfg.data)?;
            let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
            let mut net = Supernet::init(&cfg.supernet, data.d_in)?;
            train_supernet(&mut net, &data, &[], &mut |_, _| Ok(()))?;
            let dense = SubnetMask::all_true(cfg.supernet.layers);
            let valid_acc = accuracy(&net, &data, Split::Valid, &dense)?;
            let ckpt = out.join("supernet.ckpt");
            save_checkpoint(&net, &ckpt)?;
            let record = ResultsRecord::new(
                "train-supernet",
                &cfg,
                json!({
                    "epochs": cfg.supernet.epochs,
                    "first_epoch_loss": net.log.epoch_losses.first(),
                    "final_epoch_loss": net.log.epoch_losses.last(),
                    "dense_valid_accuracy": valid_acc,
                }),
            )
            .with_timing("total", started.elapsed().as_secs_f64());
            write_summary(out, &record)?;
            println!("supernet checkpoint written to {}", ckpt.display());
        }
        Command::Partition => {
            let dataset = generate_sbm(&cfg.data)?;
            let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
            let (outcome, subs) = gcnas::harness::partition_and_derive(&cfg, &data)?;
            save_checkpoint(&outcome.supernet, &out.join("supernet.ckpt"))?;
            for (i, sub) in subs.iter().enumerate() {
                save_checkpoint(&sub.params, &out.join(format!("sub_supernet_{i}.ckpt")))?;
            }
            if let Some(report) = &outcome.report {
                write_toml(out, "partition_report.toml", report)?;
            }
            let proposition_holds = outcome
                .report
                .as_ref()
                .map(|r| r.layers.iter().all(|l| l.proposition.holds));
            let record = ResultsRecord::new(
                "partition",
                &cfg,
                json!({
                    "method": cfg.partition.method.name(),
                    "k": outcome.scheme.k(),
                    "chosen_layers": outcome.scheme.chosen,
                    "cut_weights": outcome.scheme.cuts.iter().map(|c| c.weight).collect::<Vec<_>>(),
                    "sub_supernets": subs.len(),
                    "decomposition_max_rel_err":
                        outcome.contributions.as_ref().map(|c| c.decomposition_max_rel_err),
                    "proposition_holds": proposition_holds,
                }),
            )
            .with_timing("total", started.elapsed().as_secs_f64());
            write_summary(out, &record)?;
            println!(
                "partitioned into {} sub-supernet(s); report at {}",
                subs.len(),
                out.join("partition_report.toml").display()
            );
        }
        Command::Search { strategy } => match strategy {
            SearchCmd::Ga => {
                let dataset = generate_sbm(&cfg.data)?;
                let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
                let (outcome, ga) = search_ga_pipeline(&cfg, &data)?;
                #[derive(serde::Serialize)]
                struct SearchLog<'a> {
                    iteration: &'a [gcnas::ga::IterationRecord],
                }
                write_toml(out, "search_log.toml", &SearchLog { iteration: &ga.history })?;
                let record = ResultsRecord::new(
                    "search-ga",
                    &cfg,
                    json!({
                        "method": cfg.partition.method.name(),
                        "chosen_layers": outcome.scheme.chosen,
                        "best_mask": ga.best.mask.to_bit_string(),
                        "best_test_metric": ga.best_metric,
                        "final_best_fitness": ga.history.last().map(|r| r.best_fitness),
                        "iterations": ga.history.len() - 1,
                    }),
                )
                .with_timing("total", started.elapsed().as_secs_f64());
                write_summary(out, &record)?;
                println!(
                    "GA best architecture {} with test accuracy {:.4}",
                    ga.best.mask.to_bit_string(),
                    ga.best_metric
                );
            }
            SearchCmd::Darts => {
                let dataset = generate_sbm(&cfg.data)?;
                let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
                let (outcome, darts) = search_darts_pipeline(&cfg, &data)?;
                #[derive(serde::Serialize)]
                struct DartsFile<'a> {
                    results: &'a [gcnas::harness::DartsSubResult],
                }
                write_toml(out, "darts_log.toml", &DartsFile { results: &darts.per_sub })?;
                let record = ResultsRecord::new(
                    "search-darts",
                    &cfg,
                    json!({
                        "method": cfg.partition.method.name(),
                        "chosen_layers": outcome.scheme.chosen,
                        "best_mask": darts.best_mask,
                        "best_test_metric": darts.best_metric,
                        "per_sub": darts.per_sub.iter().map(|r| json!({
                            "sub_supernet": r.sub_supernet,
                            "mask": r.mask,
                            "test_metric": r.test_metric,
                        })).collect::<Vec<_>>(),
                    }),
                )
                .with_timing("total", started.elapsed().as_secs_f64());
                write_summary(out, &record)?;
                println!(
                    "DARTS best architecture {} with test accuracy {:.4}",
                    darts.best_mask, darts.best_metric
                );
            }
        },
        Command::RankCorr => {
            let result = rank_correlation_experiment(&cfg)?;
            let record = ResultsRecord::new(
                "rank-corr",
                &cfg,
                serde_json::to_value(&result).map_err(|e| Error::Format(e.to_string()))?,
            )
            .with_timing("total", started.elapsed().as_secs_f64());
            write_summary(out, &record)?;
            for m in &result.per_method {
                println!(
                    "{:>6}: Kendall {:.3} ± {:.3}  Spearman {:.3} ± {:.3}",
                    m.method, m.mean_tau, m.std_tau, m.mean_rho, m.std_rho
                );
            }
        }
        Command::StageConsistency => {
            let result = stage_consistency_experiment(&cfg)?;
            let record = ResultsRecord::new(
                "stage-consistency",
                &cfg,
                serde_json::to_value(&result).map_err(|e| Error::Format(e.to_string()))?,
            )
            .with_timing("total", started.elapsed().as_secs_f64());
            write_summary(out, &record)?;
            println!(
                "stage consistency: early/mid {:.3}  early/late {:.3}  mid/late {:.3}",
                result.tau_early_mid, result.tau_early_late, result.tau_mid_late
            );
        }
        Command::SolverCompare => {
            let result = solver_comparison_experiment(&cfg)?;
            let record = ResultsRecord::new(
                "solver-compare",
                &cfg,
                serde_json::to_value(&result).map_err(|e| Error::Format(e.to_string()))?,
            )
            .with_timing("total", started.elapsed().as_secs_f64());
            write_summary(out, &record)?;
            for row in &result.rows {
                println!(
                    "{:>22}: layers {:?} best {:.4} ({})",
                    row.solver, row.chosen_layers, row.best_metric, row.best_mask
                );
            }
            println!("metric gap: {:.4}", result.metric_gap);
        }
        Command::Report => {
            let path = aggregate_reports(out)?;
            println!("aggregated report at {}", path.display());
        }
    }
    Ok(())
}
