//! Synthetic attributed graphs for node classification.
//!
//! Datasets are stochastic-block-model community graphs: nodes belong to
//! one of `num_classes` blocks, intra-block edges are denser than
//! inter-block ones, and node features are a (optionally noised) one-hot of
//! the block plus a small gaussian jitter. Everything is deterministic in
//! the generator seed, including the train/valid/test split.

mod io;

pub use io::{load_dataset, save_dataset};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_JITTER_STD: f64 = 0.1;

/// One attributed graph. Undirected edges are stored once as `(u, v)` with
/// `u < v`; message passing expands them to both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInstance {
    pub num_nodes: usize,
    pub edges: Vec<(u32, u32)>,
    /// Row-major `num_nodes × d_in`.
    pub node_features: Vec<f64>,
    /// Row-major `num_edges × d_in`.
    pub edge_features: Vec<f64>,
    pub node_labels: Vec<u32>,
}

impl GraphInstance {
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

/// Generator parameters, kept verbatim in the dataset manifest so a file
/// can be regenerated bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmParams {
    pub num_graphs: usize,
    pub nodes_per_graph: usize,
    pub num_classes: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub d_in: usize,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        SbmParams {
            num_graphs: 60,
            nodes_per_graph: 48,
            num_classes: 3,
            p_intra: 0.7,
            p_inter: 0.08,
            d_in: 8,
            label_noise: 0.3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub params: SbmParams,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graphs: Vec<GraphInstance>,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn d_in(&self) -> usize {
        self.manifest.params.d_in
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.params.num_classes
    }

    pub fn split_indices(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.manifest.train,
            Split::Valid => &self.manifest.valid,
            Split::Test => &self.manifest.test,
        }
    }

    /// Seeded shuffled batches of graph indices; every index of the split
    /// appears exactly once.
    pub fn batches(&self, split: Split, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut indices = self.split_indices(split).to_vec();
        shuffle(&mut indices, seed);
        let batch_size = batch_size.max(1);
        indices.chunks(batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Fisher-Yates with a dedicated stream so shuffles stay reproducible.
pub(crate) fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

/// Generate a stochastic-block-model dataset.
///
/// Node features are the one-hot of a noisy copy of the label (flipped with
/// probability `label_noise`) plus gaussian jitter; edge features are a
/// constant 1-vector. Labels keep the true block id, so `label_noise`
/// controls how much features disagree with targets.
pub fn generate_sbm(params: &SbmParams) -> Result<Dataset> {
    validate(params)?;
    let mut graphs = Vec::with_capacity(params.num_graphs);
    for g in 0..params.num_graphs {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_mul(g as u64 + 1));
        graphs.push(generate_graph(params, &mut rng));
    }

    let mut order: Vec<usize> = (0..params.num_graphs).collect();
    shuffle(&mut order, params.seed ^ 0x5EED_5117);
    let n_train = (params.num_graphs as f64 * 0.6).round() as usize;
    let n_valid = (params.num_graphs as f64 * 0.2).round() as usize;
    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut valid: Vec<usize> = order[n_train..(n_train + n_valid).min(order.len())].to_vec();
    let mut test: Vec<usize> = order[(n_train + n_valid).min(order.len())..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();

    Ok(Dataset {
        graphs,
        manifest: Manifest {
            format_version: io::FORMAT_VERSION,
            params: params.clone(),
            train,
            valid,
            test,
        },
    })
}

fn validate(params: &SbmParams) -> Result<()> {
    if !(0.0..=1.0).contains(&params.p_intra) || !(0.0..=1.0).contains(&params.p_inter) {
        return Err(Error::InvalidArg("edge probabilities must lie in [0, 1]".into()));
    }
    if params.p_inter >= params.p_intra {
        return Err(Error::InvalidArg(format!(
            "p_inter ({}) must be smaller than p_intra ({})",
            params.p_inter, params.p_intra
        )));
    }
    if !(0.0..0.5).contains(&params.label_noise) {
        return Err(Error::InvalidArg("label_noise must lie in [0, 0.5)".into()));
    }
    if params.num_classes == 0 || params.nodes_per_graph == 0 {
        return Err(Error::InvalidArg("num_classes and nodes_per_graph must be positive".into()));
    }
    if params.d_in < params.num_classes {
        return Err(Error::InvalidArg(format!(
            "d_in ({}) must be at least num_classes ({}) for one-hot features",
            params.d_in, params.num_classes
        )));
    }
    Ok(())
}

fn generate_graph(params: &SbmParams, rng: &mut ChaCha8Rng) -> GraphInstance {
    let n = params.nodes_per_graph;
    let c = params.num_classes;
    // Round-robin block assignment keeps every class present whenever
    // num_classes <= num_nodes.
    let labels: Vec<u32> = (0..n).map(|i| (i % c) as u32).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] { params.p_intra } else { params.p_inter };
            if rng.gen_bool(p) {
                edges.push((u as u32, v as u32));
            }
        }
    }

    let mut node_features = vec![0.0; n * params.d_in];
    for u in 0..n {
        let mut feat_label = labels[u] as usize;
        if params.label_noise > 0.0 && rng.gen_bool(params.label_noise) {
            // Flip to a uniformly chosen different class.
            let offset = rng.gen_range(1..c);
            feat_label = (feat_label + offset) % c;
        }
        node_features[u * params.d_in + feat_label] = 1.0;
        for k in 0..params.d_in {
            node_features[u * params.d_in + k] += FEATURE_JITTER_STD * gaussian(rng);
        }
    }

    let edge_features = vec![1.0; edges.len() * params.d_in];
    GraphInstance { num_nodes: n, edges, node_features, edge_features, node_labels: labels }
}

/// Box-Muller; two uniforms per sample keeps the stream layout simple.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
