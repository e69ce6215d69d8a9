//! The candidate-module zoo and layer fusion.
//!
//! Each layer of the supernet holds six parallel modules: four
//! message-passing variants (neighbor mean, neighbor attention,
//! edge-conditioned sum, learned-softmax aggregation) and two
//! global-attention variants (dense and rank-4 factorized). All modules map
//! `N×d` node features to `N×d`, which is what allows their outputs to be
//! averaged per family and fused by a shared two-layer MLP.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::GraphInstance;
use crate::error::Result;

/// Candidate modules per layer, in fixed roster order.
pub const NUM_MODULES: usize = 6;
/// The first `NUM_MPNN` roster entries are message-passing modules; the
/// rest are global-attention modules.
pub const NUM_MPNN: usize = 4;
/// Factorization rank of the low-rank attention variant.
pub const LOW_RANK_DIM: usize = 4;
/// Additive mask value that effectively removes a softmax target while
/// keeping all intermediate values finite.
const MASK_NEG: f64 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModuleKind {
    MeanConv,
    AttnConv,
    SumEdgeConv,
    SoftmaxAggConv,
    FullAttention,
    LowRankAttention,
}

impl ModuleKind {
    pub const ALL: [ModuleKind; NUM_MODULES] = [
        ModuleKind::MeanConv,
        ModuleKind::AttnConv,
        ModuleKind::SumEdgeConv,
        ModuleKind::SoftmaxAggConv,
        ModuleKind::FullAttention,
        ModuleKind::LowRankAttention,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).expect("kind in roster")
    }

    pub fn is_mpnn(self) -> bool {
        self.index() < NUM_MPNN
    }

    pub fn name(self) -> &'static str {
        match self {
            ModuleKind::MeanConv => "mean_conv",
            ModuleKind::AttnConv => "attn_conv",
            ModuleKind::SumEdgeConv => "sum_edge_conv",
            ModuleKind::SoftmaxAggConv => "softmax_agg_conv",
            ModuleKind::FullAttention => "full_attention",
            ModuleKind::LowRankAttention => "low_rank_attention",
        }
    }
}

/// A dense affine map with the bias applied through a ones-column matmul,
/// which keeps the primitive op set minimal.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Tensor,
    pub b: Tensor,
}

impl Affine {
    pub fn init(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> Self {
        Affine { w: glorot(rng, d_in, d_out), b: Tensor::zeros(vec![1, d_out]) }
    }

    /// Glorot init with the limit shrunk by `scale`, for maps whose inputs
    /// arrive magnified (unnormalized neighbor sums) or whose outputs
    /// saturate a softmax early (logit heads).
    pub fn init_scaled(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize, scale: f64) -> Self {
        let mut affine = Affine::init(rng, d_in, d_out);
        for v in affine.w.data_mut() {
            *v *= scale;
        }
        affine
    }

    pub fn identity(d: usize) -> Self {
        Affine { w: Tensor::identity(d), b: Tensor::zeros(vec![1, d]) }
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let h = tape.matmul(x, &self.w)?;
        let ones = Tensor::filled(vec![x.shape()[0], 1], 1.0);
        let bias = tape.matmul(&ones, &self.b)?;
        tape.add(&h, &bias)
    }
}

pub fn glorot(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> Tensor {
    let limit = (6.0 / (d_in + d_out) as f64).sqrt();
    Tensor::new(
        vec![d_in, d_out],
        (0..d_in * d_out).map(|_| rng.gen_range(-limit..limit)).collect(),
    )
    .expect("glorot shape")
}

/// Per-variant parameters. Every variant preserves the feature dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum ModuleParams {
    MeanConv { lin: Affine },
    AttnConv { wq: Tensor, wk: Tensor, wv: Tensor },
    SumEdgeConv { lin: Affine, edge: Affine },
    SoftmaxAggConv { score: Tensor, tau: Tensor, lin: Affine },
    FullAttention { wq: Tensor, wk: Tensor, wv: Tensor },
    LowRankAttention { wq: Tensor, wk: Tensor, wv: Tensor },
}

impl ModuleParams {
    pub fn init(kind: ModuleKind, rng: &mut ChaCha8Rng, d: usize) -> Self {
        match kind {
            ModuleKind::MeanConv => ModuleParams::MeanConv { lin: Affine::init(rng, d, d) },
            ModuleKind::AttnConv => ModuleParams::AttnConv {
                wq: glorot(rng, d, d),
                wk: glorot(rng, d, d),
                wv: glorot(rng, d, d),
            },
            // The unnormalized neighbor sum arrives roughly degree-times
            // larger than the other modules' outputs; a shrunk input map
            // keeps the family mean balanced at init.
            ModuleKind::SumEdgeConv => ModuleParams::SumEdgeConv {
                lin: Affine::init_scaled(rng, d, d, 0.125),
                edge: Affine::init(rng, d, d),
            },
            ModuleKind::SoftmaxAggConv => ModuleParams::SoftmaxAggConv {
                score: glorot(rng, d, 1),
                tau: Tensor::new(vec![1, 1], vec![1.0]).expect("tau"),
                lin: Affine::init(rng, d, d),
            },
            ModuleKind::FullAttention => ModuleParams::FullAttention {
                wq: glorot(rng, d, d),
                wk: glorot(rng, d, d),
                wv: glorot(rng, d, d),
            },
            ModuleKind::LowRankAttention => ModuleParams::LowRankAttention {
                wq: glorot(rng, d, LOW_RANK_DIM),
                wk: glorot(rng, d, LOW_RANK_DIM),
                wv: glorot(rng, d, d),
            },
        }
    }

    pub fn kind(&self) -> ModuleKind {
        match self {
            ModuleParams::MeanConv { .. } => ModuleKind::MeanConv,
            ModuleParams::AttnConv { .. } => ModuleKind::AttnConv,
            ModuleParams::SumEdgeConv { .. } => ModuleKind::SumEdgeConv,
            ModuleParams::SoftmaxAggConv { .. } => ModuleKind::SoftmaxAggConv,
            ModuleParams::FullAttention { .. } => ModuleKind::FullAttention,
            ModuleParams::LowRankAttention { .. } => ModuleKind::LowRankAttention,
        }
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        match self {
            ModuleParams::MeanConv { lin } => vec![("w", &lin.w), ("b", &lin.b)],
            ModuleParams::AttnConv { wq, wk, wv } => {
                vec![("wq", wq), ("wk", wk), ("wv", wv)]
            }
            ModuleParams::SumEdgeConv { lin, edge } => vec![
                ("w", &lin.w),
                ("b", &lin.b),
                ("edge_w", &edge.w),
                ("edge_b", &edge.b),
            ],
            ModuleParams::SoftmaxAggConv { score, tau, lin } => {
                vec![("score", score), ("tau", tau), ("w", &lin.w), ("b", &lin.b)]
            }
            ModuleParams::FullAttention { wq, wk, wv } => {
                vec![("wq", wq), ("wk", wk), ("wv", wv)]
            }
            ModuleParams::LowRankAttention { wq, wk, wv } => {
                vec![("wq", wq), ("wk", wk), ("wv", wv)]
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        match self {
            ModuleParams::MeanConv { lin } => vec![("w", &mut lin.w), ("b", &mut lin.b)],
            ModuleParams::AttnConv { wq, wk, wv } => {
                vec![("wq", wq), ("wk", wk), ("wv", wv)]
            }
            ModuleParams::SumEdgeConv { lin, edge } => vec![
                ("w", &mut lin.w),
                ("b", &mut lin.b),
                ("edge_w", &mut edge.w),
                ("edge_b", &mut edge.b),
            ],
            ModuleParams::SoftmaxAggConv { score, tau, lin } => {
                vec![("score", score), ("tau", tau), ("w", &mut lin.w), ("b", &mut lin.b)]
            }
            ModuleParams::FullAttention { wq, wk, wv } => {
                vec![("wq", wq), ("wk", wk), ("wv", wv)]
            }
            ModuleParams::LowRankAttention { wq, wk, wv } => {
                vec![("wq", wq), ("wk", wk), ("wv", wv)]
            }
        }
    }
}

/// Two affine maps with a relu between; input and output dimension match.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionMlp {
    pub a1: Affine,
    pub a2: Affine,
}

impl FusionMlp {
    pub fn init(rng: &mut ChaCha8Rng, d_in: usize, d_hidden: usize, d_out: usize) -> Self {
        FusionMlp { a1: Affine::init(rng, d_in, d_hidden), a2: Affine::init(rng, d_hidden, d_out) }
    }

    pub fn apply(&self, tape: &mut Tape, x: &Tensor) -> Result<Tensor> {
        let h = self.a1.apply(tape, x)?;
        let h = tape.relu(&h)?;
        self.a2.apply(tape, &h)
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("w1", &self.a1.w), ("b1", &self.a1.b), ("w2", &self.a2.w), ("b2", &self.a2.b)]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("w1", &mut self.a1.w),
            ("b1", &mut self.a1.b),
            ("w2", &mut self.a2.w),
            ("b2", &mut self.a2.b),
        ]
    }
}

/// Per-graph constants precomputed once per hidden dimension: directed edge
/// index lists, degree normalizers, the isolated-node indicator, and the
/// neighbor attention mask. Isolated nodes fall back to their own features,
/// so the mask admits self exactly when a node has no neighbors.
#[derive(Debug, Clone)]
pub struct GraphCtx {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub x0: Tensor,
    pub e0: Tensor,
    pub labels: Vec<usize>,
    pub dir_src: Vec<usize>,
    pub dir_dst: Vec<usize>,
    pub dir_eid: Vec<usize>,
    inv_deg: Tensor,
    iso: Tensor,
    nbr_mask: Tensor,
}

impl GraphCtx {
    pub fn new(graph: &GraphInstance, d_in: usize, d: usize) -> Self {
        let n = graph.num_nodes;
        let m = graph.num_edges();
        let mut dir_src = Vec::with_capacity(2 * m);
        let mut dir_dst = Vec::with_capacity(2 * m);
        let mut dir_eid = Vec::with_capacity(2 * m);
        let mut degree = vec![0usize; n];
        for (eid, &(u, v)) in graph.edges.iter().enumerate() {
            let (u, v) = (u as usize, v as usize);
            dir_src.push(u);
            dir_dst.push(v);
            dir_eid.push(eid);
            dir_src.push(v);
            dir_dst.push(u);
            dir_eid.push(eid);
            degree[u] += 1;
            degree[v] += 1;
        }

        let mut inv_deg = vec![0.0; n * d];
        let mut iso = vec![0.0; n * d];
        for u in 0..n {
            let (inv, is_iso) =
                if degree[u] == 0 { (0.0, 1.0) } else { (1.0 / degree[u] as f64, 0.0) };
            for k in 0..d {
                inv_deg[u * d + k] = inv;
                iso[u * d + k] = is_iso;
            }
        }

        let mut nbr_mask = vec![MASK_NEG; n * n];
        for i in 0..2 * m {
            nbr_mask[dir_dst[i] * n + dir_src[i]] = 0.0;
        }
        for u in 0..n {
            if degree[u] == 0 {
                nbr_mask[u * n + u] = 0.0;
            }
        }

        GraphCtx {
            num_nodes: n,
            num_edges: m,
            x0: Tensor::new(vec![n, d_in], graph.node_features.clone()).expect("node features"),
            e0: Tensor::new(vec![m, d_in], graph.edge_features.clone()).expect("edge features"),
            labels: graph.node_labels.iter().map(|&l| l as usize).collect(),
            dir_src,
            dir_dst,
            dir_eid,
            inv_deg: Tensor::new(vec![n, d], inv_deg).expect("inv deg"),
            iso: Tensor::new(vec![n, d], iso).expect("iso"),
            nbr_mask: Tensor::new(vec![n, n], nbr_mask).expect("mask"),
        }
    }
}

/// Run one module over node features `x` and edge features `e`. Returns the
/// transformed node features and either updated or pass-through edge
/// features.
pub fn module_forward(
    params: &ModuleParams,
    tape: &mut Tape,
    ctx: &GraphCtx,
    x: &Tensor,
    e: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let d = x.shape()[1];
    match params {
        ModuleParams::MeanConv { lin } => {
            let msgs = tape.gather(x, &ctx.dir_src)?;
            let sums = tape.scatter_add(&msgs, &ctx.dir_dst, ctx.num_nodes)?;
            let mean = tape.mul(&sums, &ctx.inv_deg)?;
            let self_part = tape.mul(x, &ctx.iso)?;
            let agg = tape.add(&mean, &self_part)?;
            let out = lin.apply(tape, &agg)?;
            Ok((tape.relu(&out)?, e.clone()))
        }
        ModuleParams::AttnConv { wq, wk, wv } => {
            let out = masked_attention(tape, x, wq, wk, wv, Some(&ctx.nbr_mask), d)?;
            Ok((out, e.clone()))
        }
        ModuleParams::SumEdgeConv { lin, edge } => {
            let msg_x = tape.gather(x, &ctx.dir_src)?;
            let msg_e = tape.gather(e, &ctx.dir_eid)?;
            let summed = tape.add(&msg_x, &msg_e)?;
            let msgs = tape.relu(&summed)?;
            let agg = tape.scatter_add(&msgs, &ctx.dir_dst, ctx.num_nodes)?;
            let self_part = tape.mul(x, &ctx.iso)?;
            let agg = tape.add(&agg, &self_part)?;
            let x_out = lin.apply(tape, &agg)?;
            let e_out = edge.apply(tape, e)?;
            Ok((x_out, e_out))
        }
        ModuleParams::SoftmaxAggConv { score, tau, lin } => {
            let s = tape.matmul(x, score)?;
            let st = tape.matmul(&s, tau)?;
            let row = tape.transpose(&st)?;
            let ones = Tensor::filled(vec![ctx.num_nodes, 1], 1.0);
            let tiled = tape.matmul(&ones, &row)?;
            let masked = tape.add(&tiled, &ctx.nbr_mask)?;
            let attn = tape.row_softmax(&masked)?;
            let agg = tape.matmul(&attn, x)?;
            let out = lin.apply(tape, &agg)?;
            Ok((tape.relu(&out)?, e.clone()))
        }
        ModuleParams::FullAttention { wq, wk, wv } => {
            let out = masked_attention(tape, x, wq, wk, wv, None, d)?;
            Ok((out, e.clone()))
        }
        ModuleParams::LowRankAttention { wq, wk, wv } => {
            let q = tape.matmul(x, wq)?;
            let k = tape.matmul(x, wk)?;
            let v = tape.matmul(x, wv)?;
            let slot_weights = tape.row_softmax(&q)?;
            let kt = tape.transpose(&k)?;
            let node_weights = tape.row_softmax(&kt)?;
            let summaries = tape.matmul(&node_weights, &v)?;
            Ok((tape.matmul(&slot_weights, &summaries)?, e.clone()))
        }
    }
}

fn masked_attention(
    tape: &mut Tape,
    x: &Tensor,
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    mask: Option<&Tensor>,
    d: usize,
) -> Result<Tensor> {
    let q = tape.matmul(x, wq)?;
    let k = tape.matmul(x, wk)?;
    let v = tape.matmul(x, wv)?;
    let kt = tape.transpose(&k)?;
    let scores = tape.matmul(&q, &kt)?;
    let scores = tape.scalar_mul(&scores, 1.0 / (d as f64).sqrt())?;
    let scores = match mask {
        Some(m) => tape.add(&scores, m)?,
        None => scores,
    };
    let attn = tape.row_softmax(&scores)?;
    tape.matmul(&attn, &v)
}

/// Fuse the selected modules' outputs into the next layer's features:
/// family means, their sum, then the shared two-layer MLP. Empty families
/// contribute nothing; when both are empty the layer reduces to a plain
/// MLP on its input and edge features pass through.
pub fn fuse_layer(
    tape: &mut Tape,
    mpnn_outs: &[(Tensor, Tensor)],
    gt_outs: &[Tensor],
    fusion: &FusionMlp,
    x_l: &Tensor,
    e_l: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let x_parts: Vec<Tensor> = mpnn_outs.iter().map(|(x, _)| x.clone()).collect();
    let e_parts: Vec<Tensor> = mpnn_outs.iter().map(|(_, e)| e.clone()).collect();
    let x_m = mean_of(tape, &x_parts)?;
    let e_next = match mean_of(tape, &e_parts)? {
        Some(e) => e,
        None => e_l.clone(),
    };
    let x_t = mean_of(tape, gt_outs)?;
    let combined = match (x_m, x_t) {
        (Some(a), Some(b)) => tape.add(&a, &b)?,
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => x_l.clone(),
    };
    Ok((fusion.apply(tape, &combined)?, e_next))
}

fn mean_of(tape: &mut Tape, parts: &[Tensor]) -> Result<Option<Tensor>> {
    let Some(first) = parts.first() else { return Ok(None) };
    let mut acc = first.clone();
    for p in &parts[1..] {
        acc = tape.add(&acc, p)?;
    }
    if parts.len() > 1 {
        acc = tape.scalar_mul(&acc, 1.0 / parts.len() as f64)?;
    }
    Ok(Some(acc))
}
