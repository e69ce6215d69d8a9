//! Differentiable search: learnable per-module architecture weights with
//! group-wise softmax fusion, optimized jointly with the network weights,
//! then collapsed by per-group argmax.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::model::{GraphCtx, NUM_MODULES, NUM_MPNN};
use crate::supernet::{
    batch_loss, forward_graph, AdamW, LayerWeights, PreparedData, Selection,
    SubnetMask, Supernet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DartsConfig {
    pub epochs: usize,
    pub seed: u64,
}

impl Default for DartsConfig {
    fn default() -> Self {
        DartsConfig { epochs: 30, seed: 23 }
    }
}

/// Learnable architecture weights: one n-vector per layer, normalized by a
/// softmax over the MPNN group and one over the GT group.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchParams {
    /// Per layer: n×1 tensor of raw module weights α.
    pub alpha: Vec<Tensor>,
}

impl ArchParams {
    /// Zero initialization: both group softmaxes start uniform.
    pub fn zeros(layers: usize) -> Self {
        ArchParams { alpha: (0..layers).map(|_| Tensor::zeros(vec![NUM_MODULES, 1])).collect() }
    }

    pub fn layers(&self) -> usize {
        self.alpha.len()
    }

    pub fn tracked_clone(&self, tape: &mut Tape) -> ArchParams {
        ArchParams { alpha: self.alpha.iter().map(|a| tape.leaf(a)).collect() }
    }

    /// Raw α values as plain rows, for logging.
    pub fn values(&self) -> Vec<Vec<f64>> {
        self.alpha.iter().map(|a| a.data().to_vec()).collect()
    }
}

fn group_indices(allowed: Option<&SubnetMask>, layer: usize) -> (Vec<usize>, Vec<usize>) {
    let admitted = |m: usize| allowed.map_or(true, |a| a.get(layer, m));
    let mpnn = (0..NUM_MPNN).filter(|&m| admitted(m)).collect();
    let gt = (NUM_MPNN..NUM_MODULES).filter(|&m| admitted(m)).collect();
    (mpnn, gt)
}

/// Softmax the tracked α of one layer inside each family and return the
/// per-module 1×1 weights. Families restricted by `allowed` normalize over
/// their admitted members only; empty families yield no weights.
fn layer_weights(
    tape: &mut Tape,
    alpha_layer: &Tensor,
    allowed: Option<&SubnetMask>,
    layer: usize,
) -> Result<LayerWeights> {
    let (mpnn_idx, gt_idx) = group_indices(allowed, layer);
    let softmax_group = |tape: &mut Tape, idx: &[usize]| -> Result<Vec<(usize, Tensor)>> {
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        let col = tape.gather(alpha_layer, idx)?;
        let row = tape.transpose(&col)?;
        let sm = tape.row_softmax(&row)?;
        let back = tape.transpose(&sm)?;
        idx.iter()
            .enumerate()
            .map(|(pos, &module)| Ok((module, tape.gather(&back, &[pos])?)))
            .collect()
    };
    Ok(LayerWeights {
        mpnn: softmax_group(tape, &mpnn_idx)?,
        gt: softmax_group(tape, &gt_idx)?,
    })
}

fn all_layer_weights(
    tape: &mut Tape,
    alpha: &ArchParams,
    allowed: Option<&SubnetMask>,
) -> Result<Vec<LayerWeights>> {
    (0..alpha.layers()).map(|l| layer_weights(tape, &alpha.alpha[l], allowed, l)).collect()
}

/// Forward one graph with softmax-weighted module fusion.
pub fn darts_forward(
    net: &Supernet,
    alpha: &ArchParams,
    tape: &mut Tape,
    ctx: &GraphCtx,
    allowed: Option<&SubnetMask>,
) -> Result<Tensor> {
    let weights = all_layer_weights(tape, alpha, allowed)?;
    forward_graph(net, tape, ctx, &Selection::Weighted(&weights), None)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DartsLog {
    pub train_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
    /// Raw α per epoch, for trajectory inspection.
    pub alpha_trajectory: Vec<Vec<Vec<f64>>>,
}

/// Single-level joint optimization: one optimizer updates the network
/// parameters and α together on training batches; validation loss is
/// logged per epoch.
pub fn joint_optimize(
    net: &mut Supernet,
    alpha: &mut ArchParams,
    data: &PreparedData,
    config: &DartsConfig,
    allowed: Option<&SubnetMask>,
) -> Result<DartsLog> {
    if alpha.layers() != net.config.layers {
        return Err(Error::InvalidArg(format!(
            "alpha has {} layers, supernet has {}",
            alpha.layers(),
            net.config.layers
        )));
    }
    let batch_size = net.config.batch_size;
    let steps_per_epoch = data.batches(Split::Train, batch_size, 0).len();
    let mut sizes: Vec<usize> = net.collect_tensors().iter().map(|t| t.numel()).collect();
    sizes.extend(alpha.alpha.iter().map(Tensor::numel));
    let mut opt = AdamW::new(&net.config, &sizes, config.epochs * steps_per_epoch);
    let mut log = DartsLog {
        train_losses: Vec::new(),
        valid_losses: Vec::new(),
        alpha_trajectory: Vec::new(),
    };
    let mut global_step = 0usize;

    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        let epoch_seed = config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(epoch as u64);
        for batch in data.batches(Split::Train, batch_size, epoch_seed) {
            let mut tape = Tape::new();
            let tracked_net = net.tracked_clone(&mut tape);
            let tracked_alpha = alpha.tracked_clone(&mut tape);
            let weights = all_layer_weights(&mut tape, &tracked_alpha, allowed)?;
            let ctxs: Vec<&GraphCtx> = batch.iter().map(|&gi| &data.ctxs[gi]).collect();
            let loss =
                batch_loss(&tracked_net, &mut tape, &ctxs, &Selection::Weighted(&weights), None)?;
            let loss_value = loss.data()[0];
            if !loss_value.is_finite() {
                return Err(Error::Divergence { step: global_step });
            }
            let grads = tape.backward(loss.node().expect("tracked loss"))?;

            let mut grad_options: Vec<Option<Tensor>> = tracked_net
                .collect_tensors()
                .iter()
                .map(|t| grads.get(t.node().expect("tracked")).map(|g| g.detached()))
                .collect();
            grad_options.extend(
                tracked_alpha
                    .alpha
                    .iter()
                    .map(|a| grads.get(a.node().expect("tracked")).map(|g| g.detached())),
            );
            let mut params = net.collect_tensors_mut();
            params.extend(alpha.alpha.iter_mut());
            opt.apply(&mut params, &grad_options);

            epoch_loss += loss_value;
            batches += 1;
            global_step += 1;
        }
        log.train_losses.push(epoch_loss / batches.max(1) as f64);
        log.valid_losses.push(validation_loss(net, alpha, data, allowed)?);
        log.alpha_trajectory.push(alpha.values());
    }
    Ok(log)
}

fn validation_loss(
    net: &Supernet,
    alpha: &ArchParams,
    data: &PreparedData,
    allowed: Option<&SubnetMask>,
) -> Result<f64> {
    let valid = data.split(Split::Valid);
    if valid.is_empty() {
        return Ok(f64::NAN);
    }
    let mut tape = Tape::new();
    let weights = all_layer_weights(&mut tape, alpha, allowed)?;
    let ctxs: Vec<&GraphCtx> = valid.iter().map(|&gi| &data.ctxs[gi]).collect();
    let loss = batch_loss(net, &mut tape, &ctxs, &Selection::Weighted(&weights), None)?;
    Ok(loss.data()[0])
}

/// Collapse α to a mask: the highest-weight module of each family per
/// layer, ties to the lowest index. Families emptied by `allowed` select
/// nothing.
pub fn extract_architecture(alpha: &ArchParams, allowed: Option<&SubnetMask>) -> SubnetMask {
    let layers = alpha.layers();
    let mut mask = SubnetMask::all_false(layers);
    for l in 0..layers {
        let (mpnn_idx, gt_idx) = group_indices(allowed, l);
        for group in [mpnn_idx, gt_idx] {
            let mut winner: Option<usize> = None;
            for &m in &group {
                let better = match winner {
                    None => true,
                    // Strictly greater, so ties keep the lower index.
                    Some(w) => alpha.alpha[l].data()[m] > alpha.alpha[l].data()[w],
                };
                if better {
                    winner = Some(m);
                }
            }
            if let Some(m) = winner {
                mask.set(l, m, true);
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_sbm, SbmParams};
    use crate::supernet::SupernetConfig;

    fn tiny_setup() -> (Supernet, PreparedData) {
        let dataset = generate_sbm(&SbmParams {
            num_graphs: 8,
            nodes_per_graph: 10,
            ..SbmParams::default()
        })
        .unwrap();
        let config = SupernetConfig {
            layers: 3,
            hidden_dim: 6,
            epochs: 2,
            batch_size: 4,
            ..SupernetConfig::default()
        };
        let data = PreparedData::new(&dataset, config.hidden_dim);
        (Supernet::init(&config, dataset.d_in()).unwrap(), data)
    }

    #[test]
    fn uniform_alpha_matches_dense_fusion() {
        let (net, data) = tiny_setup();
        let alpha = ArchParams::zeros(net.config.layers);
        let ctx = &data.ctxs[0];
        let mut tape_w = Tape::new();
        let weighted = darts_forward(&net, &alpha, &mut tape_w, ctx, None).unwrap();
        let dense = SubnetMask::all_true(net.config.layers);
        let mut tape_d = Tape::new();
        let plain =
            forward_graph(&net, &mut tape_d, ctx, &Selection::Mask(&dense), None).unwrap();
        let diff = weighted.max_abs_diff(&plain).unwrap();
        assert!(diff < 1e-12, "uniform softmax must reduce to family means: {diff}");
    }

    #[test]
    fn group_softmax_weights_sum_to_one() {
        let mut alpha = ArchParams::zeros(2);
        alpha.alpha[0].data_mut().copy_from_slice(&[0.3, -1.0, 0.5, 2.0, 0.1, -0.4]);
        let mut tape = Tape::new();
        let tracked = alpha.tracked_clone(&mut tape);
        let w = layer_weights(&mut tape, &tracked.alpha[0], None, 0).unwrap();
        let sum_mpnn: f64 = w.mpnn.iter().map(|(_, t)| t.data()[0]).sum();
        let sum_gt: f64 = w.gt.iter().map(|(_, t)| t.data()[0]).sum();
        assert!((sum_mpnn - 1.0).abs() < 1e-12);
        assert!((sum_gt - 1.0).abs() < 1e-12);
    }

    #[test]
    fn saturated_alpha_approaches_two_module_subnet() {
        let (net, data) = tiny_setup();
        let mut alpha = ArchParams::zeros(net.config.layers);
        for l in 0..net.config.layers {
            // +50 on one module per family dominates the softmax.
            alpha.alpha[l].data_mut()[1] = 50.0;
            alpha.alpha[l].data_mut()[5] = 50.0;
        }
        let mut mask = SubnetMask::all_false(net.config.layers);
        for l in 0..net.config.layers {
            mask.set(l, 1, true);
            mask.set(l, 5, true);
        }
        let ctx = &data.ctxs[0];
        let mut tape_w = Tape::new();
        let weighted = darts_forward(&net, &alpha, &mut tape_w, ctx, None).unwrap();
        let mut tape_m = Tape::new();
        let subnet =
            forward_graph(&net, &mut tape_m, ctx, &Selection::Mask(&mask), None).unwrap();
        let diff = weighted.max_abs_diff(&subnet).unwrap();
        assert!(diff < 1e-9, "saturated softmax should match the hard mask: {diff}");
    }

    #[test]
    fn extraction_picks_group_argmaxes() {
        let mut alpha = ArchParams::zeros(1);
        alpha.alpha[0].data_mut().copy_from_slice(&[0.1, 0.9, 0.2, 0.3, 0.5, 0.4]);
        let mask = extract_architecture(&alpha, None);
        assert_eq!(mask.selected_in_layer(0), vec![1, 4]);

        // All-equal alpha: lowest index per family.
        let alpha = ArchParams::zeros(2);
        let mask = extract_architecture(&alpha, None);
        for l in 0..2 {
            assert_eq!(mask.selected_in_layer(l), vec![0, NUM_MPNN]);
        }
    }

    #[test]
    fn extraction_is_shift_invariant_and_two_per_layer() {
        let mut alpha = ArchParams::zeros(2);
        alpha.alpha[0].data_mut().copy_from_slice(&[0.1, 0.9, 0.2, 0.3, 0.5, 0.4]);
        alpha.alpha[1].data_mut().copy_from_slice(&[-0.5, -0.1, -0.9, -0.2, 1.0, 2.0]);
        let base = extract_architecture(&alpha, None);
        let mut shifted = alpha.clone();
        for l in 0..2 {
            for v in shifted.alpha[l].data_mut() {
                *v += 7.5;
            }
        }
        assert_eq!(extract_architecture(&shifted, None), base);
        for l in 0..2 {
            assert_eq!(base.selected_in_layer(l).len(), 2);
        }
    }

    #[test]
    fn extraction_respects_allowed_sets() {
        let mut alpha = ArchParams::zeros(2);
        alpha.alpha[0].data_mut().copy_from_slice(&[0.9, 0.8, 0.1, 0.2, 0.7, 0.6]);
        let mut allowed = SubnetMask::all_true(2);
        allowed.set(0, 0, false); // best MPNN banned
        allowed.set(0, 4, false); // best GT banned
        let mask = extract_architecture(&alpha, Some(&allowed));
        assert_eq!(mask.selected_in_layer(0), vec![1, 5]);
        assert!(mask.contained_in(&allowed));
    }

    #[test]
    fn zero_epochs_leave_alpha_unchanged() {
        let (mut net, data) = tiny_setup();
        let mut alpha = ArchParams::zeros(net.config.layers);
        let before = alpha.clone();
        let cfg = DartsConfig { epochs: 0, seed: 1 };
        joint_optimize(&mut net, &mut alpha, &data, &cfg, None).unwrap();
        assert_eq!(alpha, before);
    }

    #[test]
    fn joint_optimization_is_deterministic_and_learns() {
        let run = || {
            let (mut net, data) = tiny_setup();
            let mut alpha = ArchParams::zeros(net.config.layers);
            let cfg = DartsConfig { epochs: 4, seed: 9 };
            let log = joint_optimize(&mut net, &mut alpha, &data, &cfg, None).unwrap();
            (alpha, log)
        };
        let (a1, log1) = run();
        let (a2, _) = run();
        assert_eq!(a1, a2, "same seed gives identical alpha");
        assert!(
            log1.train_losses.last().unwrap() < log1.train_losses.first().unwrap(),
            "training loss decreases: {:?}",
            log1.train_losses
        );
    }
}
