//! Central-difference gradient checking.

use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Compare the reverse-mode gradient of `f` at `x` against central finite
/// differences with step `h`. Returns the largest elementwise relative
/// error, with denominator `max(|g|, 1e-8)`.
///
/// `f` must build a scalar from its tensor argument using the supplied tape
/// and be deterministic; it is evaluated once tracked and `2·numel(x)` times
/// untracked.
pub fn finite_diff_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &Tensor) -> Result<Tensor>,
{
    if h <= 0.0 {
        return Err(Error::InvalidArg(format!("finite-diff step must be positive, got {h}")));
    }
    let mut tape = Tape::new();
    let tracked = tape.leaf(x);
    let loss = f(&mut tape, &tracked)?;
    let loss_node = loss
        .node()
        .ok_or_else(|| Error::InvalidArg("closure output does not depend on x".into()))?;
    let grads = tape.backward(loss_node)?;
    let analytic = grads.get_or_zeros(tracked.node().expect("leaf is tracked"), x.shape());

    let eval = |point: &Tensor| -> Result<f64> {
        let mut scratch = Tape::new();
        let out = f(&mut scratch, point)?;
        Ok(out.data()[0])
    };

    let mut max_rel = 0.0f64;
    for i in 0..x.numel() {
        let mut plus = x.detached();
        plus.data_mut()[i] += h;
        let mut minus = x.detached();
        minus.data_mut()[i] -= h;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * h);
        let g = analytic.data()[i];
        let rel = (g - numeric).abs() / g.abs().max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}
