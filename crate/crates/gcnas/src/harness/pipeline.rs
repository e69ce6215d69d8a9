//! Shared pipeline stages: train a supernet with contribution collection,
//! turn contributions into a partition scheme for the configured method,
//! derive sub-supernets, and drive the two search strategies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::darts::{extract_architecture, joint_optimize, ArchParams, DartsLog};
use crate::error::Result;
use crate::ga::{run_ga, GaOutcome};
use crate::gc::{
    build_scheme, collect_contributions, partition_report, similarity, ContributionSet,
    GcCollectionConfig, LayerCut, PartitionReport, PartitionScheme, SimilarityMatrix,
};
use crate::harness::config::{ExperimentConfig, PartitionMethod};
use crate::model::{NUM_MODULES, NUM_MPNN};
use crate::supernet::{
    derive_sub_supernets, retrain_from_scratch, train_supernet, PreparedData, SubSupernet,
    Supernet,
};

/// Everything the partition stage produces. For the one-shot method the
/// contribution fields stay empty and the scheme has no chosen layers.
pub struct PartitionOutcome {
    pub supernet: Supernet,
    pub contributions: Option<ContributionSet>,
    pub similarities: Vec<SimilarityMatrix>,
    pub scheme: PartitionScheme,
    pub report: Option<PartitionReport>,
}

/// Train the supernet (collecting gradient contributions when the method
/// needs them) and build the partition scheme.
pub fn train_and_partition(cfg: &ExperimentConfig, data: &PreparedData) -> Result<PartitionOutcome> {
    let mut net = Supernet::init(&cfg.supernet, data.d_in)?;
    if cfg.partition.method == PartitionMethod::None {
        train_supernet(&mut net, data, &[], &mut |_, _| Ok(()))?;
        return Ok(PartitionOutcome {
            supernet: net,
            contributions: None,
            similarities: Vec::new(),
            scheme: PartitionScheme::empty(),
            report: None,
        });
    }

    let gc_cfg = GcCollectionConfig {
        warmup_epochs: cfg.partition.warmup_epochs,
        batches_to_accumulate: cfg.partition.batches_to_accumulate,
    };
    let contributions = collect_contributions(&mut net, data, &gc_cfg)?;
    let similarities = similarity(&contributions);
    let gc_scheme = build_scheme(&similarities, cfg.partition.k, cfg.partition.solver)?;
    let scheme = scheme_for_method(&gc_scheme, cfg.partition.method, cfg.supernet.seed);
    let report = partition_report(&contributions, &similarities, &scheme);
    Ok(PartitionOutcome {
        supernet: net,
        contributions: Some(contributions),
        similarities,
        scheme,
        report: Some(report),
    })
}

/// Baseline schemes reuse the GC-chosen layers but replace the cut sides:
/// FS splits each chosen layer at a fixed index boundary (first ⌈n/2⌉
/// modules), RANDOM draws a uniformly random balanced bipartition.
pub fn scheme_for_method(
    gc_scheme: &PartitionScheme,
    method: PartitionMethod,
    seed: u64,
) -> PartitionScheme {
    match method {
        PartitionMethod::None => PartitionScheme::empty(),
        PartitionMethod::Gc => gc_scheme.clone(),
        PartitionMethod::Fs => {
            let fixed: Vec<usize> = (0..NUM_MODULES.div_ceil(2)).collect();
            replace_sides(gc_scheme, |_, _| fixed.clone())
        }
        PartitionMethod::Random => {
            replace_sides(gc_scheme, |layer, gc| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(seed ^ 0xba1a_4ced ^ (layer as u64) << 8);
                let mut side = Vec::with_capacity(NUM_MODULES / 2);
                let mut pool: Vec<usize> = (0..NUM_MODULES).collect();
                for _ in 0..NUM_MODULES / 2 {
                    side.push(pool.remove(rng.gen_range(0..pool.len())));
                }
                side.sort_unstable();
                // Normalize to the side holding module 0.
                if side.contains(&0) {
                    side
                } else {
                    let _ = gc;
                    (0..NUM_MODULES).filter(|m| !side.contains(m)).collect()
                }
            })
        }
    }
}

fn replace_sides(
    gc_scheme: &PartitionScheme,
    mut side_of: impl FnMut(usize, &[usize]) -> Vec<usize>,
) -> PartitionScheme {
    let cuts = gc_scheme
        .cuts
        .iter()
        .map(|cut| {
            if gc_scheme.chosen.contains(&cut.layer) {
                LayerCut {
                    layer: cut.layer,
                    gamma: side_of(cut.layer, &cut.gamma),
                    weight: cut.weight,
                    approximate: true,
                }
            } else {
                cut.clone()
            }
        })
        .collect();
    PartitionScheme { cuts, chosen: gc_scheme.chosen.clone(), solver: gc_scheme.solver }
}

/// Partition stage plus sub-supernet derivation.
pub fn partition_and_derive(
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<(PartitionOutcome, Vec<SubSupernet>)> {
    let outcome = train_and_partition(cfg, data)?;
    let subs = derive_sub_supernets(
        &outcome.supernet,
        &outcome.scheme,
        data,
        cfg.partition.sub_supernet_fine_tune_epochs,
        cfg.partition.from_scratch,
        cfg.supernet.seed ^ 0x5b5,
    )?;
    Ok((outcome, subs))
}

/// The GA search pipeline end to end.
pub fn search_ga_pipeline(
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<(PartitionOutcome, GaOutcome)> {
    let (outcome, subs) = partition_and_derive(cfg, data)?;
    let ga = run_ga(&subs, data, &cfg.search.ga)?;
    Ok((outcome, ga))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DartsSubResult {
    pub sub_supernet: usize,
    pub mask: String,
    pub test_metric: f64,
    pub log: DartsLog,
}

pub struct DartsOutcome {
    pub per_sub: Vec<DartsSubResult>,
    pub best_mask: String,
    pub best_metric: f64,
}

/// The differentiable search pipeline: one joint optimization per
/// (sub-)supernet over its allowed modules, argmax extraction, then
/// scratch retraining of every extracted architecture.
pub fn search_darts_pipeline(
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<(PartitionOutcome, DartsOutcome)> {
    let (outcome, subs) = partition_and_derive(cfg, data)?;
    let per_sub: Vec<DartsSubResult> = subs
        .par_iter()
        .enumerate()
        .map(|(i, sub)| {
            let mut net = sub.params.clone();
            let mut alpha = ArchParams::zeros(net.config.layers);
            let mut darts_cfg = cfg.search.darts.clone();
            darts_cfg.seed = cfg.search.darts.seed.wrapping_add(i as u64);
            let log = joint_optimize(&mut net, &mut alpha, data, &darts_cfg, Some(&sub.allowed))?;
            let mask = extract_architecture(&alpha, Some(&sub.allowed));
            debug_assert!(mask.contained_in(&sub.allowed));
            let (_, metric) = retrain_from_scratch(
                &mask,
                data,
                &cfg.supernet,
                cfg.search.darts.seed ^ (i as u64) << 16,
            )?;
            Ok(DartsSubResult {
                sub_supernet: i,
                mask: mask.to_bit_string(),
                test_metric: metric,
                log,
            })
        })
        .collect::<Result<_>>()?;
    let best = per_sub
        .iter()
        .max_by(|a, b| a.test_metric.partial_cmp(&b.test_metric).expect("finite metric"))
        .expect("at least one sub-supernet");
    let best_mask = best.mask.clone();
    let best_metric = best.test_metric;
    Ok((outcome, DartsOutcome { per_sub, best_mask, best_metric }))
}

/// Uniformly sampled, deduplicated subnet masks.
pub fn sample_unique_masks(
    layers: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<crate::supernet::SubnetMask> {
    let mut seen = std::collections::HashSet::new();
    let mut masks = Vec::with_capacity(count);
    while masks.len() < count {
        let mask = crate::supernet::SubnetMask::random(layers, rng);
        if seen.insert(mask.to_bit_string()) {
            masks.push(mask);
        }
    }
    masks
}

/// MPNN/GT composition of a mask, for reporting.
pub fn mask_family_counts(mask: &crate::supernet::SubnetMask) -> (usize, usize) {
    let mut mpnn = 0;
    let mut gt = 0;
    for l in 0..mask.layers() {
        for m in mask.selected_in_layer(l) {
            if m < NUM_MPNN {
                mpnn += 1;
            } else {
                gt += 1;
            }
        }
    }
    (mpnn, gt)
}
