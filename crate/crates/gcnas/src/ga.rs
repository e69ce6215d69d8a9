//! Genetic-algorithm subnet search over one supernet or a set of
//! sub-supernets.
//!
//! Each iteration breeds `P` crossover offspring and `P` mutation offspring
//! from the current population, repairs them onto sub-supernet sides,
//! evaluates fitness with inherited weights, and keeps the top `P` of the
//! 3P pool. After the final iteration the elite individuals are retrained
//! from scratch and the best test metric wins.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::model::NUM_MODULES;
use crate::supernet::{
    evaluate_subnet, retrain_from_scratch, PreparedData, SubSupernet, Subnet, SubnetMask,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub iterations: usize,
    /// Per-layer crossover probability.
    pub p_c: f64,
    /// Per-layer mutation probability.
    pub p_m: f64,
    pub elite_count: usize,
    /// Epochs of fine-tuning before a fitness evaluation; 0 scores the
    /// inherited weights directly.
    pub fine_tune_epochs: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 12,
            iterations: 6,
            p_c: 0.6,
            p_m: 0.1,
            elite_count: 5,
            fine_tune_epochs: 0,
            seed: 17,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_c) || !(0.0..=1.0).contains(&self.p_m) {
            return Err(Error::Config("p_c and p_m must lie in [0, 1]".into()));
        }
        if self.population == 0 {
            return Err(Error::Config("population must be positive".into()));
        }
        if self.elite_count > self.population {
            return Err(Error::Config("elite_count cannot exceed population".into()));
        }
        Ok(())
    }
}

/// A candidate in the population: mask, fitness when evaluated, and the
/// index of the sub-supernet it belongs to.
#[derive(Debug, Clone)]
pub struct Individual {
    pub mask: SubnetMask,
    pub fitness: Option<f64>,
    pub home: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_mask: String,
}

pub struct GaOutcome {
    pub elites: Vec<Individual>,
    pub best: Subnet,
    pub best_metric: f64,
    pub history: Vec<IterationRecord>,
}

/// Uniform initial population, containment-repaired.
pub fn init_population(
    config: &GaConfig,
    layers: usize,
    subs: &[SubSupernet],
    rng: &mut ChaCha8Rng,
) -> Vec<Individual> {
    (0..config.population)
        .map(|_| {
            let mask = SubnetMask::random(layers, rng);
            let (mask, home) = repair(&mask, subs);
            Individual { mask, fitness: None, home }
        })
        .collect()
}

/// One-point crossover per layer with probability `p_c`: children take the
/// first parent's prefix up to a uniform point `c ∈ {1..n}` and the other
/// parent's suffix.
pub fn crossover(
    a: &SubnetMask,
    b: &SubnetMask,
    p_c: f64,
    rng: &mut ChaCha8Rng,
) -> (SubnetMask, SubnetMask) {
    let mut child_a = a.clone();
    let mut child_b = b.clone();
    for l in 0..a.layers() {
        if rng.gen_bool(p_c) {
            let c = rng.gen_range(1..=NUM_MODULES);
            for m in c..NUM_MODULES {
                child_a.set(l, m, b.get(l, m));
                child_b.set(l, m, a.get(l, m));
            }
        }
    }
    (child_a, child_b)
}

/// Per layer with probability `p_m`, flip one uniformly chosen module bit:
/// absent modules are added, present ones removed.
pub fn mutate(parent: &SubnetMask, p_m: f64, rng: &mut ChaCha8Rng) -> SubnetMask {
    let mut child = parent.clone();
    for l in 0..parent.layers() {
        if rng.gen_bool(p_m) {
            let m = rng.gen_range(0..NUM_MODULES);
            child.set(l, m, !child.get(l, m));
        }
    }
    child
}

/// Project a mask onto the sub-supernet structure: at each partitioned
/// layer keep the side holding the majority of the selection (ties and
/// empty selections go to the side containing module 0) and drop the rest.
/// Returns the repaired mask and its home sub-supernet index.
pub fn repair(mask: &SubnetMask, subs: &[SubSupernet]) -> (SubnetMask, usize) {
    if subs.len() <= 1 {
        return (mask.clone(), 0);
    }
    let chosen: Vec<usize> = subs[0].provenance.iter().map(|&(layer, _)| layer).collect();
    let mut repaired = mask.clone();
    let mut keep_gamma = Vec::with_capacity(chosen.len());
    for &layer in &chosen {
        let gamma = gamma_of_layer(subs, layer);
        let selected = mask.selected_in_layer(layer);
        let in_gamma = selected.iter().filter(|m| gamma.contains(m)).count();
        let out_gamma = selected.len() - in_gamma;
        // Module 0 sits in gamma by cut normalization, so ties fall there.
        let keep = in_gamma >= out_gamma;
        for m in 0..NUM_MODULES {
            let member = gamma.contains(&m);
            if mask.get(layer, m) && member != keep {
                repaired.set(layer, m, false);
            }
        }
        keep_gamma.push(keep);
    }
    let home = subs
        .iter()
        .position(|sub| {
            sub.provenance.iter().zip(&keep_gamma).all(|(&(_, side), &keep)| {
                matches!(side, crate::supernet::CutSide::Gamma) == keep
            })
        })
        .expect("a sub-supernet exists for every side combination");
    (repaired, home)
}

fn gamma_of_layer(subs: &[SubSupernet], layer: usize) -> Vec<usize> {
    let sub = subs
        .iter()
        .find(|s| {
            s.provenance
                .iter()
                .any(|&(l, side)| l == layer && matches!(side, crate::supernet::CutSide::Gamma))
        })
        .expect("some sub-supernet keeps gamma at each partitioned layer");
    sub.allowed.selected_in_layer(layer)
}

/// The full search: initialize, iterate crossover + mutation + survival,
/// then retrain the elites from scratch and return the best.
pub fn run_ga(
    subs: &[SubSupernet],
    data: &PreparedData,
    config: &GaConfig,
) -> Result<GaOutcome> {
    config.validate()?;
    if subs.is_empty() {
        return Err(Error::InvalidArg("run_ga needs at least one (sub-)supernet".into()));
    }
    let layers = subs[0].params.config.layers;
    let p = config.population;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cache: HashMap<(u64, usize), f64> = HashMap::new();
    let mut history = Vec::with_capacity(config.iterations + 1);

    let mut population = init_population(config, layers, subs, &mut rng);
    evaluate_population(&mut population, subs, data, config, &mut cache)?;
    history.push(record(0, &population));

    for iteration in 1..=config.iterations {
        let mut offspring: Vec<Individual> = Vec::with_capacity(2 * p);

        // Crossover: random pairing of the whole population, P children.
        let mut order: Vec<usize> = (0..p).collect();
        crate::data::shuffle(&mut order, rng.gen());
        while offspring.len() < p {
            let (i, j) = if order.len() >= 2 {
                let i = order.pop().expect("nonempty");
                let j = order.pop().expect("nonempty");
                (i, j)
            } else {
                let i = order.pop().unwrap_or(0);
                (i, rng.gen_range(0..p))
            };
            let (ca, cb) = crossover(&population[i].mask, &population[j].mask, config.p_c, &mut rng);
            for child in [ca, cb] {
                if offspring.len() < p {
                    let (mask, home) = repair(&child, subs);
                    offspring.push(Individual { mask, fitness: None, home });
                }
            }
        }

        // Mutation: every current individual parents one child.
        for parent in population.iter().take(p) {
            let child = mutate(&parent.mask, config.p_m, &mut rng);
            let (mask, home) = repair(&child, subs);
            offspring.push(Individual { mask, fitness: None, home });
        }

        evaluate_population(&mut offspring, subs, data, config, &mut cache)?;

        // Competitive survival over the 3P pool; stable sort keeps parents
        // ahead of equal-fitness offspring.
        let mut pool: Vec<Individual> = population;
        pool.extend(offspring);
        debug_assert_eq!(pool.len(), 3 * p, "pool must hold 3P individuals");
        pool.sort_by(|a, b| {
            b.fitness
                .unwrap_or(f64::NEG_INFINITY)
                .partial_cmp(&a.fitness.unwrap_or(f64::NEG_INFINITY))
                .expect("finite fitness")
        });
        pool.truncate(p);
        population = pool;
        history.push(record(iteration, &population));
    }

    // Elite retraining from scratch; the best test metric wins.
    let elites: Vec<Individual> =
        population.iter().take(config.elite_count.max(1)).cloned().collect();
    let retrained: Vec<(Subnet, f64)> = elites
        .par_iter()
        .map(|ind| {
            let seed = config.seed ^ ind.mask.fingerprint();
            retrain_from_scratch(&ind.mask, data, &subs[ind.home].params.config, seed)
        })
        .collect::<Result<_>>()?;
    let (best, best_metric) = retrained
        .into_iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite metric"))
        .expect("elite_count >= 1");

    Ok(GaOutcome { elites, best, best_metric, history })
}

fn record(iteration: usize, population: &[Individual]) -> IterationRecord {
    let fitnesses: Vec<f64> = population.iter().filter_map(|i| i.fitness).collect();
    let (best_idx, best_fitness) = population
        .iter()
        .enumerate()
        .filter_map(|(i, ind)| ind.fitness.map(|f| (i, f)))
        .max_by(|a, b| a.1.partial_cmp(&b.1).expect("finite fitness"))
        .expect("population evaluated");
    IterationRecord {
        iteration,
        best_fitness,
        mean_fitness: crate::stats::mean(&fitnesses),
        best_mask: population[best_idx].mask.to_bit_string(),
    }
}

/// Fill in missing fitness values, fanning unevaluated individuals out
/// across threads. Results are cached by (mask, home) and deterministic in
/// the GA seed regardless of evaluation order.
fn evaluate_population(
    population: &mut [Individual],
    subs: &[SubSupernet],
    data: &PreparedData,
    config: &GaConfig,
    cache: &mut HashMap<(u64, usize), f64>,
) -> Result<()> {
    let mut pending: Vec<(usize, (u64, usize))> = Vec::new();
    for (i, ind) in population.iter_mut().enumerate() {
        let key = (ind.mask.fingerprint(), ind.home);
        match cache.get(&key) {
            Some(&fit) => ind.fitness = Some(fit),
            None => pending.push((i, key)),
        }
    }
    let results: Vec<(usize, (u64, usize), f64)> = pending
        .par_iter()
        .map(|&(i, key)| {
            let ind = &population[i];
            let eval_seed = config.seed ^ key.0 ^ (key.1 as u64).wrapping_mul(0x9e37_79b9);
            let fitness = evaluate_subnet(
                &subs[ind.home].params,
                &ind.mask,
                data,
                Split::Valid,
                config.fine_tune_epochs,
                eval_seed,
            )?;
            Ok((i, key, fitness))
        })
        .collect::<Result<_>>()?;
    for (i, key, fitness) in results {
        population[i].fitness = Some(fitness);
        cache.insert(key, fitness);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supernet::{CutSide, Supernet, SupernetConfig};

    fn mask_from_rows(rows: &[[u8; NUM_MODULES]]) -> SubnetMask {
        let mut mask = SubnetMask::all_false(rows.len());
        for (l, row) in rows.iter().enumerate() {
            for (m, &bit) in row.iter().enumerate() {
                mask.set(l, m, bit == 1);
            }
        }
        mask
    }

    #[test]
    fn crossover_matches_hand_example() {
        // a=[1,1,0,0,0,0], b=[0,0,0,1,1,1], c=3 -> child_a=[1,1,0,1,1,1].
        let a = mask_from_rows(&[[1, 1, 0, 0, 0, 0]]);
        let b = mask_from_rows(&[[0, 0, 0, 1, 1, 1]]);
        // Find a seed whose first draws are: crossover fires, point c = 3.
        let mut found = None;
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if rng.gen_bool(1.0) && rng.gen_range(1..=NUM_MODULES) == 3 {
                found = Some(seed);
                break;
            }
        }
        let seed = found.expect("some seed draws c = 3");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ca, cb) = crossover(&a, &b, 1.0, &mut rng);
        assert_eq!(ca, mask_from_rows(&[[1, 1, 0, 1, 1, 1]]));
        assert_eq!(cb, mask_from_rows(&[[0, 0, 0, 0, 0, 0]]));
    }

    #[test]
    fn crossover_with_zero_probability_copies_parents() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = mask_from_rows(&[[1, 0, 1, 0, 1, 0], [0, 1, 0, 1, 0, 1]]);
        let b = mask_from_rows(&[[0, 0, 0, 0, 0, 0], [1, 1, 1, 1, 1, 1]]);
        let (ca, cb) = crossover(&a, &b, 0.0, &mut rng);
        assert_eq!(ca, a);
        assert_eq!(cb, b);
    }

    #[test]
    fn crossover_point_n_keeps_parents() {
        let a = mask_from_rows(&[[1, 1, 1, 0, 0, 0]]);
        let b = mask_from_rows(&[[0, 0, 0, 1, 1, 1]]);
        let mut found = None;
        for seed in 0..300 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            if rng.gen_bool(1.0) && rng.gen_range(1..=NUM_MODULES) == NUM_MODULES {
                found = Some(seed);
                break;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(found.expect("seed with c = n"));
        let (ca, cb) = crossover(&a, &b, 1.0, &mut rng);
        assert_eq!(ca, a, "empty suffix swap");
        assert_eq!(cb, b);
    }

    #[test]
    fn mutation_flips_at_most_one_bit_per_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let parent = mask_from_rows(&[[1, 0, 1, 0, 1, 0], [0, 0, 0, 0, 0, 0], [1, 1, 1, 1, 1, 1]]);
        for _ in 0..50 {
            let child = mutate(&parent, 1.0, &mut rng);
            for l in 0..parent.layers() {
                let dist: usize = (0..NUM_MODULES)
                    .filter(|&m| parent.get(l, m) != child.get(l, m))
                    .count();
                assert_eq!(dist, 1, "p_m = 1 flips exactly one bit per layer");
            }
        }
        let same = mutate(&parent, 0.0, &mut rng);
        assert_eq!(same, parent);
    }

    fn two_subs(layers: usize, cut_layer: usize, gamma: &[usize]) -> Vec<SubSupernet> {
        let config = SupernetConfig { layers, hidden_dim: 4, ..SupernetConfig::default() };
        let net = Supernet::init(&config, 3).unwrap();
        let mut allowed_gamma = SubnetMask::all_true(layers);
        let mut allowed_comp = SubnetMask::all_true(layers);
        for m in 0..NUM_MODULES {
            allowed_gamma.set(cut_layer, m, gamma.contains(&m));
            allowed_comp.set(cut_layer, m, !gamma.contains(&m));
        }
        vec![
            SubSupernet {
                allowed: allowed_gamma,
                params: net.clone(),
                provenance: vec![(cut_layer, CutSide::Gamma)],
            },
            SubSupernet {
                allowed: allowed_comp,
                params: net,
                provenance: vec![(cut_layer, CutSide::Complement)],
            },
        ]
    }

    #[test]
    fn repair_keeps_majority_side() {
        let subs = two_subs(3, 1, &[0, 1, 2]);
        // Selection {0,1,5} at the cut layer: majority in gamma, drop 5.
        let mut mask = SubnetMask::all_false(3);
        mask.set(1, 0, true);
        mask.set(1, 1, true);
        mask.set(1, 5, true);
        let (repaired, home) = repair(&mask, &subs);
        assert_eq!(repaired.selected_in_layer(1), vec![0, 1]);
        assert_eq!(home, 0);

        // Majority outside gamma: keep {3,5}, drop 0.
        let mut mask = SubnetMask::all_false(3);
        mask.set(1, 0, true);
        mask.set(1, 3, true);
        mask.set(1, 5, true);
        let (repaired, home) = repair(&mask, &subs);
        assert_eq!(repaired.selected_in_layer(1), vec![3, 5]);
        assert_eq!(home, 1);
    }

    #[test]
    fn repair_empty_selection_goes_to_module_zero_side() {
        let subs = two_subs(3, 1, &[0, 1, 2]);
        let mask = SubnetMask::all_false(3);
        let (repaired, home) = repair(&mask, &subs);
        assert_eq!(repaired, mask, "empty selection is contained in both sides");
        assert_eq!(home, 0, "ties resolve to the side holding module 0");
    }

    #[test]
    fn repair_contained_mask_is_unchanged() {
        let subs = two_subs(3, 1, &[0, 1, 2]);
        let mut mask = SubnetMask::all_false(3);
        mask.set(0, 4, true);
        mask.set(1, 1, true);
        mask.set(1, 2, true);
        mask.set(2, 0, true);
        let (repaired, home) = repair(&mask, &subs);
        assert_eq!(repaired, mask);
        assert_eq!(home, 0);
        assert!(repaired.contained_in(&subs[0].allowed));
    }

    #[test]
    fn init_population_inclusion_frequency_is_half() {
        // On non-partitioned layers each module appears with p = 0.5.
        let config = SupernetConfig { layers: 2, hidden_dim: 4, ..SupernetConfig::default() };
        let net = Supernet::init(&config, 3).unwrap();
        let subs = vec![SubSupernet {
            allowed: SubnetMask::all_true(2),
            params: net,
            provenance: vec![],
        }];
        let ga = GaConfig { population: 1000, ..GaConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pop = init_population(&ga, 2, &subs, &mut rng);
        for l in 0..2 {
            for m in 0..NUM_MODULES {
                let freq = pop.iter().filter(|i| i.mask.get(l, m)).count() as f64 / 1000.0;
                assert!((freq - 0.5).abs() < 0.05, "layer {l} module {m}: {freq}");
            }
        }
    }
}
