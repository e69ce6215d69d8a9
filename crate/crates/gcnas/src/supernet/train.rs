//! Training loops, subnet evaluation, and sub-supernet derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{GradStore, NodeId, Tape};
use crate::data::{shuffle, Dataset, Split};
use crate::error::{Error, Result};
use crate::gc::PartitionScheme;
use crate::model::GraphCtx;
use crate::supernet::optimizer::AdamW;
use crate::supernet::{
    batch_loss, forward_graph, CutSide, GraphTrace, Selection, SubSupernet, Subnet, Supernet,
    SubnetMask, SupernetConfig,
};

/// Graph contexts precomputed for one hidden dimension, plus the split
/// index lists. Everything training and evaluation touch, detached from the
/// dataset's storage.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub d_in: usize,
    pub num_classes: usize,
    pub ctxs: Vec<GraphCtx>,
    train: Vec<usize>,
    valid: Vec<usize>,
    test: Vec<usize>,
}

impl PreparedData {
    pub fn new(dataset: &Dataset, hidden_dim: usize) -> Self {
        let d_in = dataset.d_in();
        PreparedData {
            d_in,
            num_classes: dataset.num_classes(),
            ctxs: dataset.graphs.iter().map(|g| GraphCtx::new(g, d_in, hidden_dim)).collect(),
            train: dataset.split_indices(Split::Train).to_vec(),
            valid: dataset.split_indices(Split::Valid).to_vec(),
            test: dataset.split_indices(Split::Test).to_vec(),
        }
    }

    pub fn split(&self, split: Split) -> &[usize] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn batches(&self, split: Split, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
        let mut indices = self.split(split).to_vec();
        shuffle(&mut indices, seed);
        indices.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

/// A window of training steps whose tapes are handed to a collector:
/// the first `steps` full batches at or after `start_epoch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CollectionWindow {
    pub start_epoch: usize,
    pub steps: usize,
}

/// Everything a collector sees for one retained training step. Gradients
/// are the full backward result for the step's loss, taken before the
/// optimizer update.
pub struct StepContext<'a> {
    pub tape: &'a Tape,
    pub grads: &'a GradStore,
    pub traces: &'a [GraphTrace],
    pub loss_node: NodeId,
    pub loss_value: f64,
    pub epoch: usize,
    pub batch: &'a [usize],
}

/// One retained step from [`train_supernet_retaining`].
pub struct RetainedStep {
    pub tape: Tape,
    pub grads: GradStore,
    pub traces: Vec<GraphTrace>,
    pub loss_node: NodeId,
    pub batch: Vec<usize>,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(epoch as u64)
}

/// Train `net` for `epochs` over the train split with a fixed module mask
/// (all-true for dense supernet training). Steps that fall into a
/// collection window run with trace capture and are passed to
/// `on_window_step` before the optimizer update.
pub fn train_masked(
    net: &mut Supernet,
    data: &PreparedData,
    mask: &SubnetMask,
    epochs: usize,
    seed: u64,
    windows: &[CollectionWindow],
    on_window_step: &mut dyn FnMut(usize, StepContext) -> Result<()>,
) -> Result<()> {
    if net.config.path_sampling && !windows.is_empty() {
        return Err(Error::Config(
            "contribution collection requires dense training; disable path_sampling".into(),
        ));
    }
    let batch_size = net.config.batch_size;
    let steps_per_epoch = data.batches(Split::Train, batch_size, 0).len();
    let total_steps = epochs * steps_per_epoch;
    let sizes: Vec<usize> = net.collect_tensors().iter().map(|t| t.numel()).collect();
    let mut opt = AdamW::new(&net.config, &sizes, total_steps);
    let mut fired = vec![0usize; windows.len()];
    let mut path_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70a7_4000);
    let mut global_step = 0usize;

    for epoch in 0..epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_batches = 0usize;
        for batch in data.batches(Split::Train, batch_size, epoch_seed(seed, epoch)) {
            let step_mask;
            let step_mask_ref = if net.config.path_sampling {
                step_mask = SubnetMask::random(net.config.layers, &mut path_rng);
                &step_mask
            } else {
                mask
            };

            let active: Vec<usize> = windows
                .iter()
                .enumerate()
                .filter(|(i, w)| {
                    epoch >= w.start_epoch && fired[*i] < w.steps && batch.len() == batch_size
                })
                .map(|(i, _)| i)
                .collect();

            let mut tape = Tape::new();
            let tracked = net.tracked_clone(&mut tape);
            let ctxs: Vec<&GraphCtx> = batch.iter().map(|&gi| &data.ctxs[gi]).collect();
            let mut traces: Vec<GraphTrace> = Vec::new();
            let trace_opt = if active.is_empty() { None } else { Some(&mut traces) };
            let loss =
                batch_loss(&tracked, &mut tape, &ctxs, &Selection::Mask(step_mask_ref), trace_opt)?;
            let loss_value = loss.data()[0];
            if !loss_value.is_finite() {
                return Err(Error::Divergence { step: global_step });
            }
            let loss_node = loss.node().expect("tracked loss");
            let grads = tape.backward(loss_node)?;

            for &w in &active {
                fired[w] += 1;
                on_window_step(
                    w,
                    StepContext {
                        tape: &tape,
                        grads: &grads,
                        traces: &traces,
                        loss_node,
                        loss_value,
                        epoch,
                        batch: &batch,
                    },
                )?;
            }

            let grad_options: Vec<Option<crate::autodiff::Tensor>> = tracked
                .collect_tensors()
                .iter()
                .map(|t| grads.get(t.node().expect("tracked param")).map(|g| g.detached()))
                .collect();
            let mut params = net.collect_tensors_mut();
            opt.apply(&mut params, &grad_options);

            epoch_loss += loss_value;
            epoch_batches += 1;
            global_step += 1;
        }
        net.log.epoch_losses.push(epoch_loss / epoch_batches.max(1) as f64);
    }
    Ok(())
}

/// Dense supernet training over the full configured schedule.
pub fn train_supernet(
    net: &mut Supernet,
    data: &PreparedData,
    windows: &[CollectionWindow],
    on_window_step: &mut dyn FnMut(usize, StepContext) -> Result<()>,
) -> Result<()> {
    let mask = SubnetMask::all_true(net.config.layers);
    let epochs = net.config.epochs;
    let seed = net.config.seed;
    train_masked(net, data, &mask, epochs, seed, windows, on_window_step)
}

/// Dense training that returns the retained tapes of one window. Intended
/// for small runs; large collections should stream through
/// [`train_supernet`]'s callback instead of keeping every tape alive.
pub fn train_supernet_retaining(
    net: &mut Supernet,
    data: &PreparedData,
    window: CollectionWindow,
) -> Result<Vec<RetainedStep>> {
    let mut retained = Vec::new();
    train_supernet(net, data, &[window], &mut |_, ctx| {
        retained.push(RetainedStep {
            tape: ctx.tape.clone(),
            grads: ctx.grads.clone(),
            traces: ctx.traces.to_vec(),
            loss_node: ctx.loss_node,
            batch: ctx.batch.to_vec(),
        });
        Ok(())
    })?;
    Ok(retained)
}

/// Mean node accuracy of a masked forward over a split. Ties in the argmax
/// resolve to the lowest class index.
pub fn accuracy(
    net: &Supernet,
    data: &PreparedData,
    split: Split,
    mask: &SubnetMask,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for &gi in data.split(split) {
        let ctx = &data.ctxs[gi];
        let mut tape = Tape::new();
        let logits = forward_graph(net, &mut tape, ctx, &Selection::Mask(mask), None)?;
        let classes = logits.shape()[1];
        for (row, &label) in ctx.labels.iter().enumerate() {
            let mut best = 0usize;
            for c in 1..classes {
                if logits.get2(row, c) > logits.get2(row, best) {
                    best = c;
                }
            }
            correct += usize::from(best == label);
            total += 1;
        }
    }
    Ok(correct as f64 / total.max(1) as f64)
}

/// Evaluate a mask against `source` weights: inherit (bit-exact copy),
/// optionally fine-tune on the train split, then score on `split`. The
/// source network is never mutated.
pub fn evaluate_subnet(
    source: &Supernet,
    mask: &SubnetMask,
    data: &PreparedData,
    split: Split,
    fine_tune_epochs: usize,
    seed: u64,
) -> Result<f64> {
    let mut subnet = source.sample_subnet(mask)?;
    if fine_tune_epochs > 0 {
        train_masked(&mut subnet.params, data, mask, fine_tune_epochs, seed, &[], &mut |_, _| {
            Ok(())
        })?;
    }
    accuracy(&subnet.params, data, split, mask)
}

/// Train a mask from a fresh seeded initialization through the full
/// schedule; returns the subnet and its test accuracy.
pub fn retrain_from_scratch(
    mask: &SubnetMask,
    data: &PreparedData,
    config: &SupernetConfig,
    seed: u64,
) -> Result<(Subnet, f64)> {
    let mut cfg = config.clone();
    cfg.seed = seed;
    let mut params = Supernet::init(&cfg, data.d_in)?;
    train_masked(&mut params, data, mask, cfg.epochs, seed, &[], &mut |_, _| Ok(()))?;
    let metric = accuracy(&params, data, Split::Test, mask)?;
    Ok((Subnet { mask: mask.clone(), params }, metric))
}

/// Instantiate all `2^k` sub-supernets of a partition scheme. Each inherits
/// the parent's weights (or re-initializes when `from_scratch`) and is then
/// trained densely over its allowed modules for `fine_tune_epochs`. With
/// `k = 0` the derivation is the identity: the one "sub-supernet" is the
/// supernet itself, untouched.
pub fn derive_sub_supernets(
    parent: &Supernet,
    scheme: &PartitionScheme,
    data: &PreparedData,
    fine_tune_epochs: usize,
    from_scratch: bool,
    seed: u64,
) -> Result<Vec<SubSupernet>> {
    let layers = parent.config.layers;
    if scheme.chosen.is_empty() {
        return Ok(vec![SubSupernet {
            allowed: SubnetMask::all_true(layers),
            params: parent.clone(),
            provenance: Vec::new(),
        }]);
    }
    let k = scheme.chosen.len();
    let mut out = Vec::with_capacity(1 << k);
    for combo in 0..(1usize << k) {
        let mut allowed = SubnetMask::all_true(layers);
        let mut provenance = Vec::with_capacity(k);
        for (bit, &layer) in scheme.chosen.iter().enumerate() {
            let cut = scheme
                .cut_for(layer)
                .ok_or_else(|| Error::InvalidArg(format!("no cut recorded for layer {layer}")))?;
            let keep_gamma = (combo >> bit) & 1 == 0;
            let side = if keep_gamma { CutSide::Gamma } else { CutSide::Complement };
            for m in 0..crate::model::NUM_MODULES {
                let in_gamma = cut.gamma.contains(&m);
                allowed.set(layer, m, if keep_gamma { in_gamma } else { !in_gamma });
            }
            provenance.push((layer, side));
        }

        let mut params = if from_scratch {
            let mut cfg = parent.config.clone();
            cfg.seed = seed.wrapping_add(combo as u64).wrapping_mul(0x9e37_79b9);
            Supernet::init(&cfg, data.d_in)?
        } else {
            parent.clone()
        };
        if fine_tune_epochs > 0 {
            train_masked(
                &mut params,
                data,
                &allowed,
                fine_tune_epochs,
                seed.wrapping_add(combo as u64),
                &[],
                &mut |_, _| Ok(()),
            )?;
        }
        out.push(SubSupernet { allowed, params, provenance });
    }
    Ok(out)
}
