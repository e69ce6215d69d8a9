//! The gradient-contribution partitioning method.
//!
//! During dense supernet training the retained tape of each collection
//! step is decomposed: for every layer `l >= 1` (0-based; the first layer
//! is never partitioned) and every module `j` of that layer, the module's
//! share of the gradient arriving at the layer's fused input is extracted
//! as a single vector-Jacobian product. Cosine similarities between the
//! per-module shares define a complete weighted graph per layer whose
//! minimum cut yields the partition: conflicting-gradient modules end up on
//! opposite sides, and the k layers with the smallest cut weights are
//! split, producing 2^k sub-supernets.

mod mincut;

pub use mincut::{cut_weight, min_cut, CutResult, CutSolver};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NUM_MODULES;
use crate::supernet::{
    train_supernet, CollectionWindow, PreparedData, StepContext, Supernet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcCollectionConfig {
    /// Dense training epochs before the collection window opens.
    pub warmup_epochs: usize,
    /// Full batches whose contributions are averaged.
    pub batches_to_accumulate: usize,
}

impl Default for GcCollectionConfig {
    fn default() -> Self {
        GcCollectionConfig { warmup_epochs: 3, batches_to_accumulate: 20 }
    }
}

/// Accumulated gradient contributions of one layer's modules to the
/// layer's input boundary, flattened over the batch's nodes and features
/// and averaged over the collection steps.
#[derive(Debug, Clone)]
pub struct LayerContributions {
    /// 0-based layer whose modules are measured; its fused input is the
    /// boundary.
    pub layer: usize,
    pub vectors: Vec<Vec<f64>>,
    /// Modules with exactly zero accumulated gradient.
    pub dead: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ContributionSet {
    pub layers: Vec<LayerContributions>,
    pub steps: usize,
    /// Largest relative deviation of `Σ_j C_{l,j}` from the boundary
    /// gradient over all accumulated steps; the decomposition is an exact
    /// chain-rule split, so this stays at rounding level.
    pub decomposition_max_rel_err: f64,
}

/// Streaming accumulator fed from training-step callbacks.
pub struct ContributionCollector {
    num_layers: usize,
    sums: Vec<Vec<Vec<f64>>>,
    steps: usize,
    max_rel_err: f64,
}

impl ContributionCollector {
    pub fn new(num_layers: usize) -> Self {
        ContributionCollector {
            num_layers,
            sums: vec![Vec::new(); num_layers.saturating_sub(1)],
            steps: 0,
            max_rel_err: 0.0,
        }
    }

    /// Extract per-module contributions from one retained step and fold
    /// them into the running sums.
    pub fn accumulate(&mut self, ctx: &StepContext) -> Result<()> {
        for layer in 1..self.num_layers {
            let slot = layer - 1;
            let mut step_vectors: Vec<Vec<f64>> = vec![Vec::new(); NUM_MODULES];
            for trace in ctx.traces {
                let boundary = trace.layer_input[layer].ok_or_else(|| {
                    Error::InvalidArg(format!("layer {layer} input not tracked in trace"))
                })?;
                let boundary_shape = ctx.tape.node_shape(boundary)?.to_vec();
                let boundary_grad = ctx.grads.get_or_zeros(boundary, &boundary_shape);

                let mut sum = vec![0.0; boundary_grad.numel()];
                for (module, vector) in step_vectors.iter_mut().enumerate() {
                    let source = trace.module_out[layer][module].ok_or_else(|| {
                        Error::InvalidArg(format!(
                            "module {module} of layer {layer} skipped; collection needs dense steps"
                        ))
                    })?;
                    let source_shape = ctx.tape.node_shape(source)?.to_vec();
                    let upstream = ctx.grads.get_or_zeros(source, &source_shape);
                    let outcome = ctx.tape.vjp_contribution(source, boundary, &upstream)?;
                    for (acc, &v) in sum.iter_mut().zip(outcome.grad.data()) {
                        *acc += v;
                    }
                    vector.extend_from_slice(outcome.grad.data());
                }

                // Chain-rule completeness of the split, per graph.
                let denom = boundary_grad
                    .data()
                    .iter()
                    .fold(0.0f64, |m, &v| m.max(v.abs()))
                    .max(1e-12);
                let dev = sum
                    .iter()
                    .zip(boundary_grad.data())
                    .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
                self.max_rel_err = self.max_rel_err.max(dev / denom);
            }

            if self.sums[slot].is_empty() {
                self.sums[slot] = step_vectors;
            } else {
                for (acc, vec) in self.sums[slot].iter_mut().zip(&step_vectors) {
                    if acc.len() != vec.len() {
                        return Err(Error::InvalidArg(
                            "contribution length changed between steps; batches must be full".into(),
                        ));
                    }
                    for (a, &v) in acc.iter_mut().zip(vec) {
                        *a += v;
                    }
                }
            }
        }
        self.steps += 1;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn finish(self) -> Result<ContributionSet> {
        if self.steps == 0 {
            return Err(Error::InvalidArg("no contribution steps accumulated".into()));
        }
        let scale = 1.0 / self.steps as f64;
        let layers = self
            .sums
            .into_iter()
            .enumerate()
            .map(|(slot, vectors)| {
                let vectors: Vec<Vec<f64>> = vectors
                    .into_iter()
                    .map(|v| v.into_iter().map(|x| x * scale).collect())
                    .collect();
                let dead = vectors
                    .iter()
                    .map(|v| v.iter().all(|&x| x == 0.0))
                    .collect();
                LayerContributions { layer: slot + 1, vectors, dead }
            })
            .collect();
        Ok(ContributionSet {
            layers,
            steps: self.steps,
            decomposition_max_rel_err: self.max_rel_err,
        })
    }
}

/// Train `net` through its full schedule while decomposing the retained
/// tapes of the window that opens after `warmup_epochs`.
pub fn collect_contributions(
    net: &mut Supernet,
    data: &PreparedData,
    gc: &GcCollectionConfig,
) -> Result<ContributionSet> {
    let sets = collect_contributions_windows(
        net,
        data,
        &[CollectionWindow { start_epoch: gc.warmup_epochs, steps: gc.batches_to_accumulate }],
    )?;
    Ok(sets.into_iter().next().expect("one window requested"))
}

/// Multi-window variant used by the stage-consistency study: one
/// [`ContributionSet`] per window, all from a single training run.
pub fn collect_contributions_windows(
    net: &mut Supernet,
    data: &PreparedData,
    windows: &[CollectionWindow],
) -> Result<Vec<ContributionSet>> {
    if net.config.residual {
        return Err(Error::Config(
            "contribution collection requires residual connections off; the skip path bypasses module outputs".into(),
        ));
    }
    let mut collectors: Vec<ContributionCollector> =
        windows.iter().map(|_| ContributionCollector::new(net.config.layers)).collect();
    train_supernet(net, data, windows, &mut |w, ctx| collectors[w].accumulate(&ctx))?;
    collectors.into_iter().map(ContributionCollector::finish).collect()
}

/// Cosine similarities between one layer's module contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub layer: usize,
    /// n×n row-major, symmetric, unit diagonal, entries in [-1, 1].
    pub s: Vec<f64>,
    pub dead: Vec<bool>,
}

impl SimilarityMatrix {
    pub fn n(&self) -> usize {
        NUM_MODULES
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.s[i * NUM_MODULES + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..NUM_MODULES).map(|i| self.s[i * NUM_MODULES..(i + 1) * NUM_MODULES].to_vec()).collect()
    }
}

/// Pairwise cosine similarities per layer. Dead modules (no gradient
/// signal) get similarity 0 to every other module and 1 on the diagonal,
/// which tends to isolate them in the cut.
pub fn similarity(contribs: &ContributionSet) -> Vec<SimilarityMatrix> {
    contribs
        .layers
        .iter()
        .map(|lc| {
            let n = lc.vectors.len();
            let norms: Vec<f64> =
                lc.vectors.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
            let mut s = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    s[i * n + j] = if i == j {
                        1.0
                    } else if lc.dead[i] || lc.dead[j] {
                        0.0
                    } else {
                        let dot: f64 =
                            lc.vectors[i].iter().zip(&lc.vectors[j]).map(|(a, b)| a * b).sum();
                        dot / (norms[i] * norms[j])
                    };
                }
            }
            SimilarityMatrix { layer: lc.layer, s, dead: lc.dead.clone() }
        })
        .collect()
}

/// One layer's minimum cut.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCut {
    pub layer: usize,
    /// Module indices of Γ (always contains module 0), ascending.
    pub gamma: Vec<usize>,
    /// Cut weight γ_l on the unshifted similarities.
    pub weight: f64,
    pub approximate: bool,
}

/// Cuts for every candidate layer plus the k layers chosen for splitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionScheme {
    pub cuts: Vec<LayerCut>,
    /// Chosen layer indices, ascending; `chosen.len() == k`.
    pub chosen: Vec<usize>,
    pub solver: CutSolver,
}

impl PartitionScheme {
    /// No layers split: downstream derivation yields the one-shot setup.
    pub fn empty() -> Self {
        PartitionScheme { cuts: Vec::new(), chosen: Vec::new(), solver: CutSolver::BruteForce }
    }

    pub fn k(&self) -> usize {
        self.chosen.len()
    }

    pub fn cut_for(&self, layer: usize) -> Option<&LayerCut> {
        self.cuts.iter().find(|c| c.layer == layer)
    }
}

/// Solve every layer's cut and choose the k smallest cut weights, ties
/// broken by the lower layer index.
pub fn build_scheme(
    similarities: &[SimilarityMatrix],
    k: usize,
    solver: CutSolver,
) -> Result<PartitionScheme> {
    if k > similarities.len() {
        return Err(Error::InvalidArg(format!(
            "k = {k} exceeds the {} partitionable layers",
            similarities.len()
        )));
    }
    let cuts: Vec<LayerCut> = similarities
        .iter()
        .map(|sim| {
            let cut = min_cut(&sim.s, sim.n(), solver)?;
            Ok(LayerCut {
                layer: sim.layer,
                gamma: cut.gamma,
                weight: cut.weight,
                approximate: cut.approximate,
            })
        })
        .collect::<Result<_>>()?;
    let chosen = pick_top_k(&cuts, k);
    Ok(PartitionScheme { cuts, chosen, solver })
}

/// The k layers with the smallest cut weights; equal weights go to the
/// lower layer index. Returned ascending by layer.
pub fn pick_top_k(cuts: &[LayerCut], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = cuts.iter().map(|c| (c.weight, c.layer)).collect();
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite weights").then(a.1.cmp(&b.1)));
    let mut chosen: Vec<usize> = order.into_iter().take(k).map(|(_, l)| l).collect();
    chosen.sort_unstable();
    chosen
}

/// Arithmetic behind the partition guarantee: at least one side of a
/// minimum cut has average intra-side similarity no smaller than the whole
/// layer's average. Sums run over ordered pairs including the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub s_total: f64,
    pub s_gamma: f64,
    pub s_complement: f64,
    pub gamma_average: f64,
    pub complement_average: f64,
    pub total_average: f64,
    pub holds: bool,
}

pub fn verify_proposition(s: &[f64], n: usize, gamma: &[usize]) -> PropositionReport {
    let mut in_gamma = vec![false; n];
    for &i in gamma {
        in_gamma[i] = true;
    }
    let a = gamma.len();
    let b = n - a;
    let mut s_total = 0.0;
    let mut s_gamma = 0.0;
    let mut s_complement = 0.0;
    for i in 0..n {
        for j in 0..n {
            let v = s[i * n + j];
            s_total += v;
            if in_gamma[i] && in_gamma[j] {
                s_gamma += v;
            } else if !in_gamma[i] && !in_gamma[j] {
                s_complement += v;
            }
        }
    }
    let total_average = s_total / (n * n) as f64;
    let gamma_average = s_gamma / (a * a).max(1) as f64;
    let complement_average = s_complement / (b * b).max(1) as f64;
    PropositionReport {
        s_total,
        s_gamma,
        s_complement,
        gamma_average,
        complement_average,
        total_average,
        holds: gamma_average >= total_average || complement_average >= total_average,
    }
}

/// Structured-text partition report written next to the checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionReport {
    pub solver: String,
    pub k: usize,
    pub chosen_layers: Vec<usize>,
    pub collection_steps: usize,
    pub decomposition_max_rel_err: f64,
    pub layers: Vec<LayerReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub gamma: Vec<usize>,
    pub cut_weight: f64,
    pub approximate: bool,
    pub dead_modules: Vec<usize>,
    pub proposition: PropositionReport,
    pub similarity: Vec<Vec<f64>>,
}

pub fn partition_report(
    contribs: &ContributionSet,
    similarities: &[SimilarityMatrix],
    scheme: &PartitionScheme,
) -> PartitionReport {
    let layers = similarities
        .iter()
        .map(|sim| {
            let cut = scheme.cut_for(sim.layer).expect("cut per similarity layer");
            LayerReport {
                layer: sim.layer,
                gamma: cut.gamma.clone(),
                cut_weight: cut.weight,
                approximate: cut.approximate,
                dead_modules: sim
                    .dead
                    .iter()
                    .enumerate()
                    .filter(|(_, &d)| d)
                    .map(|(i, _)| i)
                    .collect(),
                proposition: verify_proposition(&sim.s, sim.n(), &cut.gamma),
                similarity: sim.rows(),
            }
        })
        .collect();
    PartitionReport {
        solver: scheme.solver.name().to_string(),
        k: scheme.k(),
        chosen_layers: scheme.chosen.clone(),
        collection_steps: contribs.steps,
        decomposition_max_rel_err: contribs.decomposition_max_rel_err,
        layers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Tape, Tensor};

    fn unit_diag(n: usize, off: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let mut s = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                s[i * n + j] = if i == j { 1.0 } else { off(i.min(j), i.max(j)) };
            }
        }
        s
    }

    #[test]
    fn linear_toy_contributions_match_hand_computed_products() {
        // Two modules consuming a shared boundary: y1 = A·b, y2 = B·b,
        // loss = sum(y1) + 2·sum(y2). The contributions are Aᵀ·1 and
        // Bᵀ·2·1, hand-computed below.
        let mut tape = Tape::new();
        let b = tape.leaf(&Tensor::new(vec![2, 1], vec![0.5, -1.0]).unwrap());
        let a_mat = Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b_mat = Tensor::new(vec![2, 2], vec![0.0, 1.0, -1.0, 0.0]).unwrap();
        let y1 = tape.matmul(&a_mat, &b).unwrap();
        let y2 = tape.matmul(&b_mat, &b).unwrap();
        let s1 = tape.sum_axis(&y1, 0).unwrap();
        let s1 = tape.sum_axis(&s1, 1).unwrap();
        let y2_scaled = tape.scalar_mul(&y2, 2.0).unwrap();
        let s2 = tape.sum_axis(&y2_scaled, 0).unwrap();
        let s2 = tape.sum_axis(&s2, 1).unwrap();
        let loss = tape.add(&s1, &s2).unwrap();
        let grads = tape.backward(loss.node().unwrap()).unwrap();

        let g1 = grads.get(y1.node().unwrap()).unwrap();
        let g2 = grads.get(y2.node().unwrap()).unwrap();
        assert_eq!(g1.data(), &[1.0, 1.0]);
        assert_eq!(g2.data(), &[2.0, 2.0]);

        let c1 = tape.vjp_contribution(y1.node().unwrap(), b.node().unwrap(), g1).unwrap();
        let c2 = tape.vjp_contribution(y2.node().unwrap(), b.node().unwrap(), g2).unwrap();
        // Aᵀ[1,1] = [1+3, 2+4]; Bᵀ[2,2] = [-2, 2].
        assert_eq!(c1.grad.data(), &[4.0, 6.0]);
        assert_eq!(c2.grad.data(), &[-2.0, 2.0]);

        let total = grads.get(b.node().unwrap()).unwrap();
        assert_eq!(total.data(), &[2.0, 8.0]);
    }

    fn contribution_set(vectors: Vec<Vec<Vec<f64>>>) -> ContributionSet {
        ContributionSet {
            layers: vectors
                .into_iter()
                .enumerate()
                .map(|(i, vectors)| {
                    let dead = vectors.iter().map(|v| v.iter().all(|&x| x == 0.0)).collect();
                    LayerContributions { layer: i + 1, vectors, dead }
                })
                .collect(),
            steps: 1,
            decomposition_max_rel_err: 0.0,
        }
    }

    #[test]
    fn cosine_similarity_examples() {
        let r = 1.0 / 2f64.sqrt();
        // Pad with three zero-vector (dead) modules to fill the roster.
        let set = contribution_set(vec![vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![r, r],
            vec![2.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 0.0],
        ]]);
        let sims = similarity(&set);
        let s = &sims[0];
        assert!((s.get(0, 1) - 0.0).abs() < 1e-12);
        assert!((s.get(0, 2) - r).abs() < 1e-12);
        assert!((s.get(1, 2) - r).abs() < 1e-12);
        // Scale invariance and sign flip.
        assert!((s.get(0, 3) - 1.0).abs() < 1e-12);
        assert!((s.get(0, 4) - -1.0).abs() < 1e-12);
        // Dead module: zero similarity to others, unit diagonal.
        assert_eq!(s.get(0, 5), 0.0);
        assert_eq!(s.get(5, 5), 1.0);
        assert!(s.dead[5]);
    }

    #[test]
    fn identical_contributions_have_unit_similarity() {
        let v = vec![0.3, -1.2, 0.7];
        let set = contribution_set(vec![vec![
            v.clone(),
            v.clone(),
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 1.0, 1.0],
        ]]);
        let sims = similarity(&set);
        assert!((sims[0].get(0, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn proposition_on_block_matrix() {
        let s = unit_diag(4, |i, j| if (i < 2) == (j < 2) { 0.9 } else { -0.5 });
        let report = verify_proposition(&s, 4, &[0, 1]);
        // S_Γ/|Γ|² = (2 + 2·0.9)/4 = 0.95 ≥ S_total/16.
        assert!((report.gamma_average - 0.95).abs() < 1e-12);
        assert!((report.s_total - 3.6).abs() < 1e-12);
        assert!(report.holds);
    }

    #[test]
    fn proposition_equality_case_holds() {
        let n = 4;
        let s = vec![0.5; n * n];
        let report = verify_proposition(&s, n, &[0, 2]);
        assert!((report.gamma_average - report.total_average).abs() < 1e-15);
        assert!(report.holds);
    }

    #[test]
    fn proposition_holds_on_random_min_cuts() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..100 {
            let n = rng.gen_range(3..=7);
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
            let report = verify_proposition(&s, n, &cut.gamma);
            assert!(report.holds, "violated for n={n} gamma={:?}", cut.gamma);
        }
    }

    #[test]
    fn top_k_selection_orders_by_weight_then_layer() {
        let cuts = vec![
            LayerCut { layer: 1, gamma: vec![0], weight: 5.0, approximate: false },
            LayerCut { layer: 2, gamma: vec![0], weight: -1.0, approximate: false },
            LayerCut { layer: 3, gamma: vec![0], weight: 3.0, approximate: false },
        ];
        assert_eq!(pick_top_k(&cuts, 2), vec![2, 3]);
        assert_eq!(pick_top_k(&cuts, 0), Vec::<usize>::new());
        assert_eq!(pick_top_k(&cuts, 3), vec![1, 2, 3]);
        // Tie: equal weights pick the lower layer.
        let tied = vec![
            LayerCut { layer: 1, gamma: vec![0], weight: 2.0, approximate: false },
            LayerCut { layer: 2, gamma: vec![0], weight: 2.0, approximate: false },
        ];
        assert_eq!(pick_top_k(&tied, 1), vec![1]);
    }

    #[test]
    fn build_scheme_rejects_oversized_k() {
        let sims: Vec<SimilarityMatrix> = (1..=3)
            .map(|layer| SimilarityMatrix {
                layer,
                s: unit_diag(NUM_MODULES, |_, _| 0.1),
                dead: vec![false; NUM_MODULES],
            })
            .collect();
        assert!(build_scheme(&sims, 4, CutSolver::BruteForce).is_err());
        let scheme = build_scheme(&sims, 0, CutSolver::BruteForce).unwrap();
        assert!(scheme.chosen.is_empty());
        assert_eq!(scheme.cuts.len(), 3);
    }
}
