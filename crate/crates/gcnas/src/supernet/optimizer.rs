//! AdamW with linear warmup and cosine decay.

use crate::autodiff::Tensor;
use crate::supernet::SupernetConfig;

/// Decoupled-weight-decay Adam. Moment buffers are laid out in the
/// supernet's tensor visitation order; the schedule state is the step
/// counter plus the precomputed warmup/total step counts.
#[derive(Debug, Clone)]
pub struct AdamW {
    base_lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    max_grad_norm: Option<f64>,
    warmup_steps: usize,
    total_steps: usize,
    step: usize,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(config: &SupernetConfig, sizes: &[usize], total_steps: usize) -> Self {
        let warmup_steps = ((total_steps as f64) * config.warmup_frac).ceil() as usize;
        AdamW {
            base_lr: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            weight_decay: config.weight_decay,
            max_grad_norm: config.max_grad_norm,
            warmup_steps,
            total_steps: total_steps.max(1),
            step: 0,
            m: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            v: sizes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Learning rate for 1-based step `t`: linear warmup to the base rate,
    /// then cosine decay to zero at the final step.
    pub fn lr_at(&self, t: usize) -> f64 {
        if self.warmup_steps > 0 && t <= self.warmup_steps {
            return self.base_lr * t as f64 / self.warmup_steps as f64;
        }
        let decay_len = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = (t - self.warmup_steps) as f64 / decay_len as f64;
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress.min(1.0)).cos())
    }

    /// Apply one update. `grads[i]` pairs with `params[i]`; missing
    /// gradients (modules unused by the step's mask) leave moments decaying
    /// toward zero, matching a zero gradient.
    pub fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient count mismatch");
        self.step += 1;
        let lr = self.lr_at(self.step);
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);

        let clip_scale = match self.max_grad_norm {
            Some(max) => {
                let total_sq: f64 = grads
                    .iter()
                    .flatten()
                    .flat_map(|g| g.data().iter())
                    .map(|&v| v * v)
                    .sum();
                let norm = total_sq.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        for (i, param) in params.iter_mut().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let data = param.data_mut();
            for j in 0..data.len() {
                let g = grads[i].as_ref().map_or(0.0, |g| g.data()[j]) * clip_scale;
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                data[j] -= lr * (m_hat / (v_hat.sqrt() + self.epsilon) + self.weight_decay * data[j]);
            }
        }
    }
}
