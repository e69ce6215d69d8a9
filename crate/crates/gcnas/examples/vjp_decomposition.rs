//! The gradient-contribution primitive on its own: build a small tracked
//! computation, run one backward pass, and split a boundary gradient into
//! per-consumer shares whose sum reproduces the total exactly.
//!
//! ```bash
//! cargo run --release -p gcnas --example vjp_decomposition
//! ```

use gcnas::autodiff::{Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> gcnas::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mat = |r: usize, c: usize| {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    };

    // A boundary consumed by three parallel branches, like one layer's
    // input feeding its parallel modules.
    let mut tape = Tape::new();
    let boundary = tape.leaf(&mat(4, 3));
    tape.tag_boundary("shared_input", boundary.node().unwrap());

    let w1 = mat(3, 3);
    let w2 = mat(3, 3);
    let w3 = mat(3, 3);
    let pre1 = tape.matmul(&boundary, &w1)?;
    let y1 = tape.relu(&pre1)?;
    let y2 = tape.matmul(&boundary, &w2)?;
    let pre3 = tape.matmul(&boundary, &w3)?;
    let y3 = tape.row_softmax(&pre3)?;

    let partial = tape.add(&y1, &y2)?;
    let merged = tape.add(&partial, &y3)?;
    let squared = tape.mul(&merged, &merged)?;
    let rows = tape.sum_axis(&squared, 0)?;
    let loss = tape.sum_axis(&rows, 1)?;

    let grads = tape.backward(loss.node().unwrap())?;
    let total = grads.get(boundary.node().unwrap()).unwrap();

    let mut reassembled = Tensor::zeros(total.shape().to_vec());
    for (name, branch) in [("relu branch", &y1), ("linear branch", &y2), ("softmax branch", &y3)]
    {
        let upstream = grads.get(branch.node().unwrap()).unwrap();
        let share = tape.vjp_contribution(
            branch.node().unwrap(),
            boundary.node().unwrap(),
            upstream,
        )?;
        let norm = share.grad.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("{name}: contribution norm {norm:.4}");
        for (acc, &v) in reassembled.data_mut().iter_mut().zip(share.grad.data()) {
            *acc += v;
        }
    }

    let err = reassembled.max_abs_diff(total).unwrap();
    println!("| sum of contributions - full gradient |_inf = {err:.2e}");
    assert!(err < 1e-12, "the decomposition is an exact chain-rule split");
    Ok(())
}
