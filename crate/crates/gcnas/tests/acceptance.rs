//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured numbers (visible under `--nocapture`).
//!
//! ```bash
//! cargo test --release -p gcnas --test acceptance -- --nocapture
//! ```

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gcnas::autodiff::{finite_diff_check, Tape, Tensor};
use gcnas::data::{generate_sbm, SbmParams, Split};
use gcnas::gc::{
    build_scheme, collect_contributions, min_cut, similarity, verify_proposition, CutSolver,
    GcCollectionConfig, SimilarityMatrix,
};
use gcnas::ga::{run_ga, GaConfig};
use gcnas::harness::{
    rank_correlation_experiment, search_ga_pipeline, solver_comparison_experiment,
    stage_consistency_experiment, ExperimentConfig, PartitionMethod, ResultsRecord,
};
use gcnas::model::NUM_MODULES;
use gcnas::stats::{kendall_tau, spearman_rho};
use gcnas::supernet::{
    derive_sub_supernets, forward_graph, PreparedData, Selection, SubnetMask, Supernet,
    SupernetConfig,
};

fn pass(criterion: usize, name: &str, detail: String, started: Instant) {
    println!(
        "ACCEPTANCE {criterion:>2} {name}: PASS ({detail}; {:.1}s)",
        started.elapsed().as_secs_f64()
    );
}

// ── 1: gradient correctness ─────────────────────────────────────────────

fn random_net_loss(tape: &mut Tape, x: &Tensor, seed: u64) -> gcnas::Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = x.shape()[1];
    let hidden = rng.gen_range(3..7);
    let classes = rng.gen_range(2..5);
    let mk = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-0.9..0.9)).collect()).unwrap()
    };
    let w1 = mk(&mut rng, d, hidden);
    let w2 = mk(&mut rng, hidden, classes);
    let h = tape.matmul(x, &w1)?;
    let h = tape.relu(&h)?;
    let h = if rng.gen_bool(0.5) {
        let s = tape.row_softmax(&h)?;
        tape.mul(&h, &s)?
    } else {
        let t = tape.transpose(&h)?;
        let back = tape.transpose(&t)?;
        tape.add(&h, &back)?
    };
    let logits = tape.matmul(&h, &w2)?;
    let labels: Vec<usize> = (0..x.shape()[0]).map(|i| i % classes).collect();
    tape.cross_entropy_loss(&logits, &labels)
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(7_000 + seed);
        let rows = rng.gen_range(2..6);
        let cols = rng.gen_range(2..6);
        let x = Tensor::new(
            vec![rows, cols],
            (0..rows * cols).map(|_| rng.gen_range(-1.2..1.2)).collect(),
        )
        .unwrap();
        let err = finite_diff_check(|t, x| random_net_loss(t, x, seed), &x, 1e-5).unwrap();
        worst = worst.max(err);
        assert!(err < 1e-4, "seed {seed}: max relative error {err}");
    }
    pass(1, "gradient correctness", format!("100 nets, worst rel err {worst:.2e}"), started);
}

// ── 2: decomposition completeness ───────────────────────────────────────

#[test]
fn criterion_2_decomposition_completeness() {
    let started = Instant::now();
    let dataset = generate_sbm(&SbmParams {
        num_graphs: 24,
        nodes_per_graph: 24,
        d_in: 6,
        ..SbmParams::default()
    })
    .unwrap();
    let config = SupernetConfig {
        layers: 5,
        hidden_dim: 12,
        epochs: 6,
        batch_size: 4,
        ..SupernetConfig::default()
    };
    let data = PreparedData::new(&dataset, config.hidden_dim);
    let mut net = Supernet::init(&config, dataset.d_in()).unwrap();
    let gc = GcCollectionConfig { warmup_epochs: 1, batches_to_accumulate: 10 };
    let contributions = collect_contributions(&mut net, &data, &gc).unwrap();
    assert_eq!(contributions.steps, 10);
    assert!(
        contributions.decomposition_max_rel_err < 1e-10,
        "decomposition residual {}",
        contributions.decomposition_max_rel_err
    );
    pass(
        2,
        "decomposition completeness",
        format!(
            "5-layer supernet, {} steps, max rel err {:.2e}",
            contributions.steps, contributions.decomposition_max_rel_err
        ),
        started,
    );
}

// ── 3: min-cut oracle equivalence ───────────────────────────────────────

/// Independent enumerator: recursive side assignment over vertices 1..n
/// with vertex 0 pinned, cut weight summed over unordered pairs.
fn oracle_min_cut(s: &[f64], n: usize) -> (Vec<usize>, f64) {
    fn recurse(
        v: usize,
        n: usize,
        sides: &mut Vec<bool>,
        s: &[f64],
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if v == n {
            if sides.iter().all(|&side| side) {
                return; // not a bipartition
            }
            let mut weight = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if sides[i] != sides[j] {
                        weight += s[i * n + j];
                    }
                }
            }
            let gamma: Vec<usize> = (0..n).filter(|&i| sides[i]).collect();
            let better = match best {
                None => true,
                Some((bw, bg)) => weight < *bw || (weight == *bw && gamma < *bg),
            };
            if better {
                *best = Some((weight, gamma));
            }
            return;
        }
        for side in [true, false] {
            sides.push(side);
            recurse(v + 1, n, sides, s, best);
            sides.pop();
        }
    }
    let mut best = None;
    let mut sides = vec![true]; // vertex 0 pinned into gamma
    recurse(1, n, &mut sides, s, &mut best);
    let (weight, gamma) = best.expect("n >= 2");
    (gamma, weight)
}

#[test]
fn criterion_3_min_cut_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(333);
    for trial in 0..500 {
        let n = rng.gen_range(3..=8);
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            s[i * n + i] = 1.0;
            for j in (i + 1)..n {
                // Dyadic grid values keep sums exact, so ties are exact.
                let v = f64::from(rng.gen_range(-64i32..=64)) / 64.0;
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
        let cut = min_cut(&s, n, CutSolver::BruteForce).unwrap();
        let (oracle_gamma, oracle_weight) = oracle_min_cut(&s, n);
        assert_eq!(cut.gamma, oracle_gamma, "trial {trial}, n={n}");
        assert_eq!(cut.weight, oracle_weight, "trial {trial}, n={n}");
    }
    pass(3, "min-cut oracle equivalence", "500 matrices, exact agreement".into(), started);
}

// ── 4: partition guarantee on random matrices ───────────────────────────

#[test]
fn criterion_4_proposition_zero_violations() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(444);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let n = rng.gen_range(3..=8);
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            s[i * n + i] = 1.0;
            for j in (i + 1)..n {
                let v = rng.gen_range(-1.0..1.0);
                s[i * n + j] = v;
                s[j * n + i] = v;
            }
        }
        let cut = min_cut(&s, n, CutSolver::BruteForce).unwrap();
        if !verify_proposition(&s, n, &cut.gamma).holds {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "the intra-side average similarity guarantee failed");
    pass(4, "partition proposition", "1000 random min cuts, zero violations".into(), started);
}

// ── 5: sub-supernet combinatorics ───────────────────────────────────────

#[test]
fn criterion_5_sub_supernet_combinatorics() {
    let started = Instant::now();
    let dataset = generate_sbm(&SbmParams {
        num_graphs: 6,
        nodes_per_graph: 8,
        d_in: 4,
        ..SbmParams::default()
    })
    .unwrap();
    let config = SupernetConfig { layers: 4, hidden_dim: 4, ..SupernetConfig::default() };
    let data = PreparedData::new(&dataset, config.hidden_dim);
    let net = Supernet::init(&config, dataset.d_in()).unwrap();

    let sims: Vec<SimilarityMatrix> = (1..4)
        .map(|layer| {
            let mut s = vec![0.3; NUM_MODULES * NUM_MODULES];
            for i in 0..NUM_MODULES {
                s[i * NUM_MODULES + i] = 1.0;
            }
            // Make layers 1 and 3 the clear split choices.
            if layer != 2 {
                for (i, j) in [(0, 3), (1, 4), (2, 5)] {
                    s[i * NUM_MODULES + j] = -0.9;
                    s[j * NUM_MODULES + i] = -0.9;
                }
            }
            SimilarityMatrix { layer, s, dead: vec![false; NUM_MODULES] }
        })
        .collect();
    let scheme = build_scheme(&sims, 2, CutSolver::BruteForce).unwrap();
    assert_eq!(scheme.chosen, vec![1, 3]);

    let subs = derive_sub_supernets(&net, &scheme, &data, 0, false, 9).unwrap();
    assert_eq!(subs.len(), 4, "k=2 must yield exactly 2^2 sub-supernets");

    for &layer in &scheme.chosen {
        // Each partitioned layer's allowed sets are one side or the other,
        // and both sides appear; together they cover the module roster.
        let mut sides: Vec<Vec<usize>> = subs
            .iter()
            .map(|sub| sub.allowed.selected_in_layer(layer))
            .collect();
        sides.sort();
        sides.dedup();
        assert_eq!(sides.len(), 2, "layer {layer} has exactly two distinct sides");
        let mut union: Vec<usize> = sides.concat();
        union.sort_unstable();
        assert_eq!(union, (0..NUM_MODULES).collect::<Vec<_>>(), "sides partition the roster");
    }
    // All four side combinations are distinct.
    let mut combos: Vec<String> = subs
        .iter()
        .map(|sub| format!("{:?}", sub.provenance))
        .collect();
    combos.sort();
    combos.dedup();
    assert_eq!(combos.len(), 4);

    // Non-partitioned layers stay fully allowed.
    for sub in &subs {
        assert_eq!(sub.allowed.selected_in_layer(0).len(), NUM_MODULES);
        assert_eq!(sub.allowed.selected_in_layer(2).len(), NUM_MODULES);
    }

    // k = 0 derives exactly the supernet itself.
    let trivial = derive_sub_supernets(
        &net,
        &gcnas::gc::PartitionScheme::empty(),
        &data,
        15,
        false,
        9,
    )
    .unwrap();
    assert_eq!(trivial.len(), 1);
    for (a, b) in trivial[0].params.collect_tensors().iter().zip(net.collect_tensors()) {
        assert!(a.bit_eq(b), "k=0 sub-supernet must equal the supernet bit-exactly");
    }
    pass(5, "sub-supernet combinatorics", "k=2 gives 4 partitioning sub-supernets".into(), started);
}

// ── 6: rank-correlation direction ───────────────────────────────────────

#[test]
fn criterion_6_rank_correlation_direction() {
    let started = Instant::now();
    let cfg = ExperimentConfig::default();
    assert!(cfg.protocol.seeds.len() >= 5);
    assert_eq!(cfg.protocol.num_rank_subnets, 24);
    let result = rank_correlation_experiment(&cfg).unwrap();
    let gc = result.stats_for(PartitionMethod::Gc).expect("gc stats");
    let os = result.stats_for(PartitionMethod::None).expect("one-shot stats");
    println!(
        "  gc tau {:+.3} ± {:.3} (per seed {:?})",
        gc.mean_tau,
        gc.std_tau,
        gc.taus.iter().map(|t| format!("{t:+.2}")).collect::<Vec<_>>()
    );
    println!(
        "  os tau {:+.3} ± {:.3} (per seed {:?})",
        os.mean_tau,
        os.std_tau,
        os.taus.iter().map(|t| format!("{t:+.2}")).collect::<Vec<_>>()
    );
    assert!(
        gc.mean_tau >= os.mean_tau + 0.05,
        "mean Kendall tau: gc {:.3} vs os {:.3}",
        gc.mean_tau,
        os.mean_tau
    );
    pass(
        6,
        "rank-correlation direction",
        format!("gc {:+.3} vs os {:+.3} over {} seeds", gc.mean_tau, os.mean_tau, gc.taus.len()),
        started,
    );
}

// ── 7: stage consistency ────────────────────────────────────────────────

#[test]
fn criterion_7_stage_consistency() {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.supernet.layers = 6;
    assert!(cfg.supernet.layers >= 5);
    let result = stage_consistency_experiment(&cfg).unwrap();
    println!(
        "  tau early/mid {:+.3}, early/late {:+.3}, mid/late {:+.3}",
        result.tau_early_mid, result.tau_early_late, result.tau_mid_late
    );
    for (pair, tau) in [
        ("early/mid", result.tau_early_mid),
        ("early/late", result.tau_early_late),
        ("mid/late", result.tau_mid_late),
    ] {
        assert!(tau > 0.5, "{pair} cut-weight ranking consistency {tau}");
    }
    pass(
        7,
        "stage consistency",
        format!(
            "pairwise tau {:.2}/{:.2}/{:.2}",
            result.tau_early_mid, result.tau_early_late, result.tau_mid_late
        ),
        started,
    );
}

// ── 8: solver robustness ────────────────────────────────────────────────

#[test]
fn criterion_8_solver_robustness() {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.search.ga.fine_tune_epochs = 3;
    let result = solver_comparison_experiment(&cfg).unwrap();
    for row in &result.rows {
        println!(
            "  {:>22}: layers {:?} best metric {:.4}",
            row.solver, row.chosen_layers, row.best_metric
        );
    }
    assert!(result.metric_gap < 0.02, "solver metric gap {}", result.metric_gap);
    pass(8, "solver robustness", format!("metric gap {:.4}", result.metric_gap), started);
}

// ── 9: GA contracts ─────────────────────────────────────────────────────

#[test]
fn criterion_9_ga_contracts() {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.data.num_graphs = 24;
    cfg.data.nodes_per_graph = 16;
    cfg.supernet.epochs = 10;
    cfg.supernet.hidden_dim = 8;
    cfg.partition.sub_supernet_fine_tune_epochs = 4;
    cfg.partition.batches_to_accumulate = 5;
    cfg.search.ga = GaConfig { population: 8, iterations: 4, ..GaConfig::default() };
    let dataset = generate_sbm(&cfg.data).unwrap();
    let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
    let (_, subs) = gcnas::harness::partition_and_derive(&cfg, &data).unwrap();

    // The 3P-pool invariant is asserted inside the survival step (debug
    // assertions are active in test builds); the outward contracts are
    // checked here.
    let ga = run_ga(&subs, &data, &cfg.search.ga).unwrap();
    assert_eq!(ga.history.len(), cfg.search.ga.iterations + 1);
    let mut best_so_far = f64::NEG_INFINITY;
    for rec in &ga.history {
        assert!(
            rec.best_fitness >= best_so_far - 1e-15,
            "best fitness decreased at iteration {}",
            rec.iteration
        );
        best_so_far = best_so_far.max(rec.best_fitness);
    }
    for elite in &ga.elites {
        assert!(
            elite.mask.contained_in(&subs[elite.home].allowed),
            "elite violates containment in its home sub-supernet"
        );
        assert!(elite.fitness.is_some());
        let f = elite.fitness.unwrap();
        assert!((0.0..=1.0).contains(&f));
    }
    pass(
        9,
        "GA contracts",
        format!(
            "pool 3P each iteration, best fitness non-decreasing over {} iterations",
            cfg.search.ga.iterations
        ),
        started,
    );
}

// ── 10: weight-inheritance fidelity ─────────────────────────────────────

#[test]
fn criterion_10_weight_inheritance_fidelity() {
    let started = Instant::now();
    let dataset = generate_sbm(&SbmParams {
        num_graphs: 8,
        nodes_per_graph: 16,
        ..SbmParams::default()
    })
    .unwrap();
    let config =
        SupernetConfig { layers: 4, hidden_dim: 8, epochs: 3, ..SupernetConfig::default() };
    let data = PreparedData::new(&dataset, config.hidden_dim);
    let mut net = Supernet::init(&config, dataset.d_in()).unwrap();
    gcnas::supernet::train_supernet(&mut net, &data, &[], &mut |_, _| Ok(())).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mask = SubnetMask::random(config.layers, &mut rng);
    let subnet = net.sample_subnet(&mask).unwrap();
    for (a, b) in subnet.params.collect_tensors().iter().zip(net.collect_tensors()) {
        assert!(a.bit_eq(b), "inherited parameters must be bit-equal");
    }

    let dense = SubnetMask::all_true(config.layers);
    let all_true = net.sample_subnet(&dense).unwrap();
    let mut worst = 0.0f64;
    for ctx in &data.ctxs {
        let mut tape_a = Tape::new();
        let direct =
            forward_graph(&net, &mut tape_a, ctx, &Selection::Mask(&dense), None).unwrap();
        let mut tape_b = Tape::new();
        let sampled = forward_graph(
            &all_true.params,
            &mut tape_b,
            ctx,
            &Selection::Mask(&all_true.mask),
            None,
        )
        .unwrap();
        worst = worst.max(direct.max_abs_diff(&sampled).unwrap());
    }
    assert!(worst < 1e-12, "dense forward vs all-true subnet forward: {worst}");
    pass(
        10,
        "weight-inheritance fidelity",
        format!("bit-equal params, dense/all-true forward diff {worst:.1e}"),
        started,
    );
}

// ── 11: rank statistic oracles ──────────────────────────────────────────

fn oracle_kendall(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut p, mut q) = (0f64, 0f64);
    let (mut tx, mut ty) = (0f64, 0f64);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = x[i].partial_cmp(&x[j]).unwrap();
            let b = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::*;
            match (a, b) {
                (Equal, Equal) => {}
                (Equal, _) => tx += 1.0,
                (_, Equal) => ty += 1.0,
                (Less, Less) | (Greater, Greater) => p += 1.0,
                _ => q += 1.0,
            }
        }
    }
    let n0 = (n * (n - 1)) as f64 / 2.0;
    (p - q) / ((n0 - tx) * (n0 - ty)).sqrt()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> f64 {
    // Rank via sorted position averaging, then the explicit Pearson form.
    fn ranks(values: &[f64]) -> Vec<f64> {
        let n = values.len();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let less = values.iter().filter(|&&v| v < values[i]).count() as f64;
            let equal = values.iter().filter(|&&v| v == values[i]).count() as f64;
            out[i] = less + (equal + 1.0) / 2.0;
        }
        out
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn criterion_11_rank_statistic_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let mut checked = 0usize;
    while checked < 1000 {
        let n = rng.gen_range(2..=20);
        // A coarse value grid makes ties common.
        let x: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..10))).collect();
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.gen_range(0..10))).collect();
        let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
        if constant(&x) || constant(&y) {
            continue;
        }
        let tau = kendall_tau(&x, &y).unwrap();
        let rho = spearman_rho(&x, &y).unwrap();
        assert!((tau - oracle_kendall(&x, &y)).abs() < 1e-12);
        assert!((rho - oracle_spearman(&x, &y)).abs() < 1e-12);
        checked += 1;
    }
    pass(11, "rank statistic oracles", "1000 lists within 1e-12".into(), started);
}

// ── 12: determinism ─────────────────────────────────────────────────────

#[test]
fn criterion_12_pipeline_determinism() {
    let started = Instant::now();
    let mut cfg = ExperimentConfig::default();
    cfg.data.num_graphs = 24;
    cfg.data.nodes_per_graph = 16;
    cfg.supernet.epochs = 8;
    cfg.supernet.hidden_dim = 8;
    cfg.partition.sub_supernet_fine_tune_epochs = 3;
    cfg.partition.batches_to_accumulate = 5;
    cfg.search.ga = GaConfig { population: 6, iterations: 2, ..GaConfig::default() };

    let run = || {
        let dataset = generate_sbm(&cfg.data).unwrap();
        let data = PreparedData::new(&dataset, cfg.supernet.hidden_dim);
        let (outcome, ga) = search_ga_pipeline(&cfg, &data).unwrap();
        let metrics = serde_json::json!({
            "cut_weights": outcome.scheme.cuts.iter().map(|c| c.weight).collect::<Vec<_>>(),
            "chosen": outcome.scheme.chosen,
            "decomposition_max_rel_err":
                outcome.contributions.as_ref().map(|c| c.decomposition_max_rel_err),
            "history": ga.history.iter().map(|r| (r.best_fitness, r.mean_fitness)).collect::<Vec<_>>(),
            "best_mask": ga.best.mask.to_bit_string(),
            "best_metric": ga.best_metric,
        });
        serde_json::to_string(&ResultsRecord::new("determinism-check", &cfg, metrics).metrics)
            .unwrap()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "pipeline reruns must reproduce metrics bit-exactly");
    pass(12, "determinism", "full search pipeline metrics bit-identical".into(), started);
}
