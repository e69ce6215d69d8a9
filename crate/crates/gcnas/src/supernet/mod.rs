//! The L-layer weight-sharing supernet: assembly, forward passes, subnet
//! sampling with weight inheritance, and sub-supernet derivation.

mod checkpoint;
mod optimizer;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use optimizer::AdamW;
pub use train::{
    accuracy, derive_sub_supernets, evaluate_subnet, retrain_from_scratch, train_masked,
    train_supernet, train_supernet_retaining, CollectionWindow, PreparedData, RetainedStep,
    StepContext,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape, Tensor};
use crate::error::{Error, Result};
use crate::model::{
    fuse_layer, module_forward, Affine, FusionMlp, GraphCtx, ModuleKind, ModuleParams,
    NUM_MODULES, NUM_MPNN,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupernetConfig {
    /// Number of MPGT layers; partitioning needs at least 2.
    pub layers: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of total optimizer steps spent in linear warmup before the
    /// cosine decay begins.
    pub warmup_frac: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    pub max_grad_norm: Option<f64>,
    /// Adds +X_l after each layer's fusion. Off by default; the gradient
    /// decomposition is exact only without the skip path.
    pub residual: bool,
    /// Train with a fresh uniform-random module mask per step instead of
    /// the dense supernet (ablation).
    pub path_sampling: bool,
    pub seed: u64,
}

impl Default for SupernetConfig {
    fn default() -> Self {
        SupernetConfig {
            layers: 5,
            hidden_dim: 16,
            num_classes: 3,
            epochs: 40,
            batch_size: 8,
            learning_rate: 0.005,
            warmup_frac: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-3,
            max_grad_norm: None,
            residual: false,
            path_sampling: false,
            seed: 7,
        }
    }
}

impl SupernetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(Error::Config(format!(
                "supernet needs at least 2 layers, got {}",
                self.layers
            )));
        }
        if self.hidden_dim == 0 || self.num_classes < 2 || self.batch_size == 0 {
            return Err(Error::Config("hidden_dim, num_classes, batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.warmup_frac) {
            return Err(Error::Config("warmup_frac must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// L×n boolean module selection; the genotype of search.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubnetMask {
    select: Vec<Vec<bool>>,
}

impl SubnetMask {
    pub fn all_true(layers: usize) -> Self {
        SubnetMask { select: vec![vec![true; NUM_MODULES]; layers] }
    }

    pub fn all_false(layers: usize) -> Self {
        SubnetMask { select: vec![vec![false; NUM_MODULES]; layers] }
    }

    /// Each module included independently with probability 1/2.
    pub fn random(layers: usize, rng: &mut ChaCha8Rng) -> Self {
        SubnetMask {
            select: (0..layers)
                .map(|_| (0..NUM_MODULES).map(|_| rng.gen_bool(0.5)).collect())
                .collect(),
        }
    }

    pub fn layers(&self) -> usize {
        self.select.len()
    }

    pub fn get(&self, layer: usize, module: usize) -> bool {
        self.select[layer][module]
    }

    pub fn set(&mut self, layer: usize, module: usize, value: bool) {
        self.select[layer][module] = value;
    }

    pub fn layer(&self, layer: usize) -> &[bool] {
        &self.select[layer]
    }

    pub fn layer_mut(&mut self, layer: usize) -> &mut [bool] {
        &mut self.select[layer]
    }

    pub fn selected_in_layer(&self, layer: usize) -> Vec<usize> {
        (0..NUM_MODULES).filter(|&m| self.select[layer][m]).collect()
    }

    pub fn count_selected(&self) -> usize {
        self.select.iter().flatten().filter(|&&b| b).count()
    }

    /// True when every selected module is also allowed.
    pub fn contained_in(&self, allowed: &SubnetMask) -> bool {
        self.first_violation(allowed).is_none()
    }

    pub fn first_violation(&self, allowed: &SubnetMask) -> Option<(usize, usize)> {
        for l in 0..self.layers() {
            for m in 0..NUM_MODULES {
                if self.select[l][m] && !allowed.select[l][m] {
                    return Some((l, m));
                }
            }
        }
        None
    }

    /// Stable 64-bit content hash, used for seeding and caching.
    pub fn fingerprint(&self) -> u64 {
        let mut hash = 0xcbf2_9ce4_8422_2325u64;
        for row in &self.select {
            for &bit in row {
                hash ^= u64::from(bit) + 1;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        hash
    }

    /// Compact text form, one group of 6 bits per layer.
    pub fn to_bit_string(&self) -> String {
        self.select
            .iter()
            .map(|row| row.iter().map(|&b| if b { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub modules: Vec<ModuleParams>,
    pub fusion: FusionMlp,
}

/// The full over-parameterized network: encoder, L MPGT layers with the
/// complete module roster each, and a two-layer prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct Supernet {
    pub config: SupernetConfig,
    pub d_in: usize,
    pub encoder_node: Affine,
    pub encoder_edge: Affine,
    pub layers: Vec<LayerParams>,
    pub head: FusionMlp,
    pub log: TrainLog,
}

impl Supernet {
    pub fn init(config: &SupernetConfig, d_in: usize) -> Result<Self> {
        config.validate()?;
        let d = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let encoder_node = Affine::init(&mut rng, d_in, d);
        let encoder_edge = Affine::init(&mut rng, d_in, d);
        let layers = (0..config.layers)
            .map(|_| LayerParams {
                modules: ModuleKind::ALL
                    .iter()
                    .map(|&k| ModuleParams::init(k, &mut rng, d))
                    .collect(),
                fusion: FusionMlp::init(&mut rng, d, d, d),
            })
            .collect();
        let mut head = FusionMlp::init(&mut rng, d, d, config.num_classes);
        // Small initial logits keep early cross-entropy gradients tame and
        // avoid the collapse into a single predicted class.
        for v in head.a2.w.data_mut() {
            *v *= 0.1;
        }
        Ok(Supernet {
            config: config.clone(),
            d_in,
            encoder_node,
            encoder_edge,
            layers,
            head,
            log: TrainLog::default(),
        })
    }

    /// Visit every parameter tensor with a stable key. The visitation order
    /// defines the optimizer state layout and the checkpoint layout.
    pub fn visit_tensors<'a>(&'a self, f: &mut impl FnMut(String, &'a Tensor)) {
        for (name, t) in named_affine("encoder_node", &self.encoder_node) {
            f(name, t);
        }
        for (name, t) in named_affine("encoder_edge", &self.encoder_edge) {
            f(name, t);
        }
        for (l, layer) in self.layers.iter().enumerate() {
            for (m, module) in layer.modules.iter().enumerate() {
                for (name, t) in module.tensors() {
                    f(format!("layer{l}.module{m}.{name}"), t);
                }
            }
            for (name, t) in layer.fusion.tensors() {
                f(format!("layer{l}.fusion.{name}"), t);
            }
        }
        for (name, t) in self.head.tensors() {
            f(format!("head.{name}"), t);
        }
    }

    pub fn collect_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.visit_tensors(&mut |_, t| out.push(t));
        out
    }

    pub fn collect_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![
            &mut self.encoder_node.w,
            &mut self.encoder_node.b,
            &mut self.encoder_edge.w,
            &mut self.encoder_edge.b,
        ];
        for layer in self.layers.iter_mut() {
            for module in layer.modules.iter_mut() {
                for (_, t) in module.tensors_mut() {
                    out.push(t);
                }
            }
            for (_, t) in layer.fusion.tensors_mut() {
                out.push(t);
            }
        }
        for (_, t) in self.head.tensors_mut() {
            out.push(t);
        }
        out
    }

    /// Clone whose parameter tensors are all tracked leaves on `tape`, in
    /// visitation order.
    pub fn tracked_clone(&self, tape: &mut Tape) -> Supernet {
        let mut clone = self.clone();
        for t in clone.collect_tensors_mut() {
            *t = tape.leaf(t);
        }
        clone
    }

    pub fn num_parameters(&self) -> usize {
        self.collect_tensors().iter().map(|t| t.numel()).sum()
    }

    /// Sample a subnet with inherited weights. The supernet itself imposes
    /// no containment restriction.
    pub fn sample_subnet(&self, mask: &SubnetMask) -> Result<Subnet> {
        if mask.layers() != self.config.layers {
            return Err(Error::InvalidArg(format!(
                "mask has {} layers, supernet has {}",
                mask.layers(),
                self.config.layers
            )));
        }
        Ok(Subnet { mask: mask.clone(), params: self.clone() })
    }
}

fn named_affine<'a>(prefix: &str, affine: &'a Affine) -> Vec<(String, &'a Tensor)> {
    vec![(format!("{prefix}.w"), &affine.w), (format!("{prefix}.b"), &affine.b)]
}

/// Which side of a layer cut a sub-supernet kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutSide {
    Gamma,
    Complement,
}

/// One of the 2^k networks obtained by restricting each chosen layer to one
/// side of its cut. Holds its own weight copy.
#[derive(Debug, Clone)]
pub struct SubSupernet {
    pub allowed: SubnetMask,
    pub params: Supernet,
    /// (layer, kept side) for every partitioned layer, ascending by layer.
    pub provenance: Vec<(usize, CutSide)>,
}

impl SubSupernet {
    /// Sample with containment: the mask must stay inside the allowed set.
    pub fn sample_subnet(&self, mask: &SubnetMask) -> Result<Subnet> {
        if let Some((layer, module)) = mask.first_violation(&self.allowed) {
            return Err(Error::Containment { layer, module });
        }
        self.params.sample_subnet(mask)
    }
}

/// A candidate architecture: a mask plus its own weight copy.
#[derive(Debug, Clone)]
pub struct Subnet {
    pub mask: SubnetMask,
    pub params: Supernet,
}

/// Per-layer module mixing weights for the differentiable search forward:
/// `(module index, tracked 1×1 weight)` per family, already softmaxed.
#[derive(Debug, Clone)]
pub struct LayerWeights {
    pub mpnn: Vec<(usize, Tensor)>,
    pub gt: Vec<(usize, Tensor)>,
}

/// How a forward pass selects and combines layer modules.
pub enum Selection<'a> {
    /// Family means over the masked-in modules.
    Mask(&'a SubnetMask),
    /// Softmax-weighted sums per family (differentiable search), one entry
    /// per layer.
    Weighted(&'a [LayerWeights]),
}

/// Node ids recorded during a tracked forward pass of one graph.
#[derive(Debug, Clone)]
pub struct GraphTrace {
    /// Fused input tensor of each layer.
    pub layer_input: Vec<Option<NodeId>>,
    /// Pre-fusion node-feature output of each module, `None` when skipped.
    pub module_out: Vec<Vec<Option<NodeId>>>,
}

impl GraphTrace {
    fn empty(layers: usize) -> Self {
        GraphTrace {
            layer_input: vec![None; layers],
            module_out: vec![vec![None; NUM_MODULES]; layers],
        }
    }
}

/// Forward one graph through the network, returning per-node logits.
pub fn forward_graph(
    net: &Supernet,
    tape: &mut Tape,
    ctx: &GraphCtx,
    selection: &Selection,
    mut trace: Option<&mut GraphTrace>,
) -> Result<Tensor> {
    let mut x = net.encoder_node.apply(tape, &ctx.x0)?;
    let mut e = net.encoder_edge.apply(tape, &ctx.e0)?;

    for (l, layer) in net.layers.iter().enumerate() {
        if let Some(trace) = trace.as_deref_mut() {
            trace.layer_input[l] = x.node();
            if let Some(id) = x.node() {
                tape.tag_boundary(format!("layer{l}.input"), id);
            }
        }

        let (x_next, e_next) = match selection {
            Selection::Mask(mask) => {
                let mut mpnn_outs = Vec::new();
                let mut gt_outs = Vec::new();
                for m in 0..NUM_MODULES {
                    if !mask.get(l, m) {
                        continue;
                    }
                    let (x_out, e_out) = module_forward(&layer.modules[m], tape, ctx, &x, &e)?;
                    if let Some(trace) = trace.as_deref_mut() {
                        trace.module_out[l][m] = x_out.node();
                    }
                    if m < NUM_MPNN {
                        mpnn_outs.push((x_out, e_out));
                    } else {
                        gt_outs.push(x_out);
                    }
                }
                fuse_layer(tape, &mpnn_outs, &gt_outs, &layer.fusion, &x, &e)?
            }
            Selection::Weighted(weights) => {
                weighted_layer(net, tape, ctx, l, &weights[l], &x, &e, trace.as_deref_mut())?
            }
        };

        x = if net.config.residual { tape.add(&x_next, &x)? } else { x_next };
        e = e_next;
    }

    net.head.apply(tape, &x)
}

/// Differentiable-search layer: weighted sums per family instead of means,
/// edge outputs weighted identically to the MPNN node weights.
#[allow(clippy::too_many_arguments)]
fn weighted_layer(
    net: &Supernet,
    tape: &mut Tape,
    ctx: &GraphCtx,
    l: usize,
    weights: &LayerWeights,
    x: &Tensor,
    e: &Tensor,
    mut trace: Option<&mut GraphTrace>,
) -> Result<(Tensor, Tensor)> {
    let layer = &net.layers[l];
    let mut x_m: Option<Tensor> = None;
    let mut e_next: Option<Tensor> = None;
    for (m, w) in &weights.mpnn {
        let (x_out, e_out) = module_forward(&layer.modules[*m], tape, ctx, x, e)?;
        if let Some(trace) = trace.as_deref_mut() {
            trace.module_out[l][*m] = x_out.node();
        }
        let xw = scale_by(tape, &x_out, w)?;
        let ew = scale_by(tape, &e_out, w)?;
        x_m = Some(match x_m {
            Some(acc) => tape.add(&acc, &xw)?,
            None => xw,
        });
        e_next = Some(match e_next {
            Some(acc) => tape.add(&acc, &ew)?,
            None => ew,
        });
    }
    let mut x_t: Option<Tensor> = None;
    for (m, w) in &weights.gt {
        let (x_out, _) = module_forward(&layer.modules[*m], tape, ctx, x, e)?;
        if let Some(trace) = trace.as_deref_mut() {
            trace.module_out[l][*m] = x_out.node();
        }
        let xw = scale_by(tape, &x_out, w)?;
        x_t = Some(match x_t {
            Some(acc) => tape.add(&acc, &xw)?,
            None => xw,
        });
    }
    let combined = match (x_m, x_t) {
        (Some(a), Some(b)) => tape.add(&a, &b)?,
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => x.clone(),
    };
    Ok((layer.fusion.apply(tape, &combined)?, e_next.unwrap_or_else(|| e.clone())))
}

/// Multiply a matrix by a tracked 1×1 weight via ones-matmul tiling.
fn scale_by(tape: &mut Tape, t: &Tensor, w: &Tensor) -> Result<Tensor> {
    let rows = t.shape()[0];
    let cols = t.shape()[1];
    let ones_col = Tensor::filled(vec![rows, 1], 1.0);
    let col = tape.matmul(&ones_col, w)?;
    let ones_row = Tensor::filled(vec![1, cols], 1.0);
    let tiled = tape.matmul(&col, &ones_row)?;
    tape.mul(t, &tiled)
}

/// Mean cross-entropy over a batch of graphs.
pub fn batch_loss(
    net: &Supernet,
    tape: &mut Tape,
    ctxs: &[&GraphCtx],
    selection: &Selection,
    mut traces: Option<&mut Vec<GraphTrace>>,
) -> Result<Tensor> {
    let mut total: Option<Tensor> = None;
    for ctx in ctxs {
        let mut trace = traces.as_deref_mut().map(|_| GraphTrace::empty(net.config.layers));
        let logits = forward_graph(net, tape, ctx, selection, trace.as_mut())?;
        let loss = tape.cross_entropy_loss(&logits, &ctx.labels)?;
        if let (Some(traces), Some(trace)) = (traces.as_deref_mut(), trace) {
            traces.push(trace);
        }
        total = Some(match total {
            Some(acc) => tape.add(&acc, &loss)?,
            None => loss,
        });
    }
    let total = total.ok_or_else(|| Error::InvalidArg("empty batch".into()))?;
    tape.scalar_mul(&total, 1.0 / ctxs.len() as f64)
}
