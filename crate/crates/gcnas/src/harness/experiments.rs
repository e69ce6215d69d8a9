//! Experiment protocols: rank correlation, stage consistency, and solver
//! comparison.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_sbm, Split};
use crate::error::{Error, Result};
use crate::ga::{repair, run_ga};
use crate::gc::{
    build_scheme, collect_contributions_windows, min_cut, similarity, GcCollectionConfig,
};
use crate::harness::config::{ExperimentConfig, PartitionMethod};
use crate::harness::pipeline::{sample_unique_masks, scheme_for_method, train_and_partition};
use crate::stats::{kendall_tau, mean, spearman_rho, std_dev};
use crate::supernet::{
    derive_sub_supernets, evaluate_subnet, retrain_from_scratch, CollectionWindow, PreparedData,
    Supernet,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodRankStats {
    pub method: String,
    pub taus: Vec<f64>,
    pub rhos: Vec<f64>,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub mean_rho: f64,
    pub std_rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankCorrelationResult {
    pub per_method: Vec<MethodRankStats>,
    /// Per-seed standard deviation of the scratch-trained ground-truth
    /// accuracies; near-zero spread would make the ranking meaningless.
    pub ground_truth_spread: Vec<f64>,
    pub num_subnets: usize,
}

impl RankCorrelationResult {
    pub fn stats_for(&self, method: PartitionMethod) -> Option<&MethodRankStats> {
        self.per_method.iter().find(|m| m.method == method.name())
    }
}

/// The rank-correlation protocol: sample subnets once, scratch-train them
/// for ground truth, then rank the same subnets under each method's
/// inherited weights (plus brief fine-tuning) and correlate the two
/// rankings. Repeated per seed; the dataset itself stays fixed.
pub fn rank_correlation_experiment(cfg: &ExperimentConfig) -> Result<RankCorrelationResult> {
    let dataset = generate_sbm(&cfg.data)?;
    let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
    let needs_partition =
        cfg.protocol.methods.iter().any(|&m| m != PartitionMethod::None);

    struct SeedRun {
        spread: f64,
        taus: Vec<f64>,
        rhos: Vec<f64>,
    }

    let runs: Vec<SeedRun> = cfg
        .protocol
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut seed_cfg = cfg.clone();
            seed_cfg.supernet.seed = seed;
            // The trained supernet is identical whether or not tapes are
            // decomposed along the way, so one training run serves every
            // method of this seed.
            seed_cfg.partition.method =
                if needs_partition { PartitionMethod::Gc } else { PartitionMethod::None };
            let outcome = train_and_partition(&seed_cfg, &data)?;

            let mut mask_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x3a5c_93d1);
            let masks =
                sample_unique_masks(cfg.supernet.layers, cfg.protocol.num_rank_subnets, &mut mask_rng);

            let mut scratch_cfg = cfg.supernet.clone();
            scratch_cfg.epochs = cfg.protocol.scratch_epochs;
            let ground_truth: Vec<f64> = masks
                .par_iter()
                .map(|mask| {
                    retrain_from_scratch(mask, &data, &scratch_cfg, seed ^ mask.fingerprint())
                        .map(|(_, metric)| metric)
                })
                .collect::<Result<_>>()?;

            let mut taus = Vec::new();
            let mut rhos = Vec::new();
            for &method in &cfg.protocol.methods {
                let scheme = scheme_for_method(&outcome.scheme, method, seed);
                let subs = derive_sub_supernets(
                    &outcome.supernet,
                    &scheme,
                    &data,
                    cfg.partition.sub_supernet_fine_tune_epochs,
                    cfg.partition.from_scratch,
                    seed ^ 0x5b5,
                )?;
                let estimates: Vec<f64> = masks
                    .par_iter()
                    .map(|mask| {
                        // The mask is evaluated verbatim against its
                        // best-matching sub-supernet (majority rule);
                        // modules outside that side fall back to the
                        // weights inherited from the parent.
                        let home = repair(mask, &subs).1;
                        evaluate_subnet(
                            &subs[home].params,
                            mask,
                            &data,
                            Split::Test,
                            cfg.protocol.fine_tune_epochs,
                            seed ^ mask.fingerprint() ^ 0xf1e7,
                        )
                    })
                    .collect::<Result<_>>()?;
                taus.push(kendall_tau(&ground_truth, &estimates)?);
                rhos.push(spearman_rho(&ground_truth, &estimates)?);
            }
            Ok(SeedRun { spread: std_dev(&ground_truth), taus, rhos })
        })
        .collect::<Result<_>>()?;

    let per_method = cfg
        .protocol
        .methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let taus: Vec<f64> = runs.iter().map(|r| r.taus[i]).collect();
            let rhos: Vec<f64> = runs.iter().map(|r| r.rhos[i]).collect();
            MethodRankStats {
                method: method.name().to_string(),
                mean_tau: mean(&taus),
                std_tau: std_dev(&taus),
                mean_rho: mean(&rhos),
                std_rho: std_dev(&rhos),
                taus,
                rhos,
            }
        })
        .collect();

    Ok(RankCorrelationResult {
        per_method,
        ground_truth_spread: runs.iter().map(|r| r.spread).collect(),
        num_subnets: cfg.protocol.num_rank_subnets,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageConsistencyResult {
    pub tau_early_mid: f64,
    pub tau_early_late: f64,
    pub tau_mid_late: f64,
    /// Cut weights per stage, ordered by layer.
    pub gammas: Vec<Vec<f64>>,
    pub window_epochs: Vec<usize>,
}

/// Collect contributions at early, middle, and late training windows of a
/// single run and compare the per-layer cut-weight rankings across stages.
pub fn stage_consistency_experiment(cfg: &ExperimentConfig) -> Result<StageConsistencyResult> {
    if cfg.supernet.layers < 3 {
        return Err(Error::InvalidArg(
            "stage consistency needs at least 3 layers; the cut-weight ranking is too short".into(),
        ));
    }
    let dataset = generate_sbm(&cfg.data)?;
    let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
    let epochs = cfg.supernet.epochs;
    let early = cfg.partition.warmup_epochs.min(epochs.saturating_sub(1));
    let mid = (epochs / 2).max(early);
    let late = (epochs * 4 / 5).max(mid);
    let steps = cfg.partition.batches_to_accumulate;
    let windows = [
        CollectionWindow { start_epoch: early, steps },
        CollectionWindow { start_epoch: mid, steps },
        CollectionWindow { start_epoch: late, steps },
    ];

    let mut net = Supernet::init(&cfg.supernet, data.d_in)?;
    let sets = collect_contributions_windows(&mut net, &data, &windows)?;
    let gammas: Vec<Vec<f64>> = sets
        .iter()
        .map(|set| {
            similarity(set)
                .iter()
                .map(|sim| {
                    min_cut(&sim.s, sim.n(), cfg.partition.solver).map(|cut| cut.weight)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    Ok(StageConsistencyResult {
        tau_early_mid: kendall_tau(&gammas[0], &gammas[1])?,
        tau_early_late: kendall_tau(&gammas[0], &gammas[2])?,
        tau_mid_late: kendall_tau(&gammas[1], &gammas[2])?,
        gammas,
        window_epochs: vec![early, mid, late],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverRow {
    pub solver: String,
    pub chosen_layers: Vec<usize>,
    pub cut_weights: Vec<f64>,
    pub best_mask: String,
    pub best_metric: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverComparisonResult {
    pub rows: Vec<SolverRow>,
    pub metric_gap: f64,
}

/// Run the full GC pipeline once per cut solver with shared seeds and
/// compare the final searched metrics.
pub fn solver_comparison_experiment(cfg: &ExperimentConfig) -> Result<SolverComparisonResult> {
    let dataset = generate_sbm(&cfg.data)?;
    let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);

    // Training and collection are solver-independent; share them.
    let mut net = Supernet::init(&cfg.supernet, data.d_in)?;
    let gc_cfg = GcCollectionConfig {
        warmup_epochs: cfg.partition.warmup_epochs,
        batches_to_accumulate: cfg.partition.batches_to_accumulate,
    };
    let contributions = crate::gc::collect_contributions(&mut net, &data, &gc_cfg)?;
    let similarities = similarity(&contributions);

    let solvers = [crate::gc::CutSolver::BruteForce, crate::gc::CutSolver::StoerWagnerShifted];
    let rows: Vec<SolverRow> = solvers
        .iter()
        .map(|&solver| {
            let scheme = build_scheme(&similarities, cfg.partition.k, solver)?;
            let subs = derive_sub_supernets(
                &net,
                &scheme,
                &data,
                cfg.partition.sub_supernet_fine_tune_epochs,
                cfg.partition.from_scratch,
                cfg.supernet.seed ^ 0x5b5,
            )?;
            let ga = run_ga(&subs, &data, &cfg.search.ga)?;
            Ok(SolverRow {
                solver: solver.name().to_string(),
                chosen_layers: scheme.chosen.clone(),
                cut_weights: scheme.cuts.iter().map(|c| c.weight).collect(),
                best_mask: ga.best.mask.to_bit_string(),
                best_metric: ga.best_metric,
            })
        })
        .collect::<Result<_>>()?;

    let metric_gap = (rows[0].best_metric - rows[1].best_metric).abs();
    Ok(SolverComparisonResult { rows, metric_gap })
}
