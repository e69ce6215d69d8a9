//! Reverse-mode automatic differentiation over dense tensors.
//!
//! The engine keeps the whole forward computation on a retained [`Tape`],
//! which supports two kinds of reverse sweeps: ordinary backpropagation
//! ([`Tape::backward`]) and per-source decomposed vector-Jacobian products
//! ([`Tape::vjp_contribution`]). The second is what lets the partitioner
//! split a boundary gradient into the shares contributed by individual
//! modules of the succeeding layer.

mod finite_diff;
mod tape;
mod tensor;

pub use finite_diff::finite_diff_check;
pub use tape::{GradStore, Tape, VjpOutcome};
pub use tensor::{NodeId, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let eye = Tensor::identity(2);
        let v = t2(&[&[3.0], &[4.0]]);
        let out = tape.matmul(&eye, &v).unwrap();
        assert_eq!(out.data(), &[3.0, 4.0]);
        assert_eq!(out.shape(), &[2, 1]);
    }

    #[test]
    fn relu_definition() {
        let mut tape = Tape::new();
        let x = Tensor::vector(vec![-1.0, 2.0, 0.0]);
        let out = tape.relu(&x).unwrap();
        assert_eq!(out.data(), &[0.0, 2.0, 0.0]);
    }

    #[test]
    fn softmax_symmetry() {
        let mut tape = Tape::new();
        let x = Tensor::vector(vec![0.0, 0.0]);
        let out = tape.row_softmax(&x).unwrap();
        assert_eq!(out.data(), &[0.5, 0.5]);
    }

    #[test]
    fn untracked_inputs_record_nothing() {
        let mut tape = Tape::new();
        let a = t2(&[&[1.0, 2.0]]);
        let b = t2(&[&[3.0, 4.0]]);
        let out = tape.add(&a, &b).unwrap();
        assert!(out.node().is_none());
        assert!(tape.is_empty());
    }

    #[test]
    fn grad_of_sum_of_squares() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::vector(vec![1.0, 2.0, 3.0]));
        let sq = tape.mul(&x, &x).unwrap();
        let loss = tape.sum_axis(&sq, 0).unwrap();
        let grads = tape.backward(loss.node().unwrap()).unwrap();
        let gx = grads.get(x.node().unwrap()).unwrap();
        assert_eq!(gx.data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn softmax_cross_entropy_gradient() {
        // logits [0, 0], label 0: grad = softmax - onehot = [-0.5, 0.5]
        let mut tape = Tape::new();
        let z = tape.leaf(&t2(&[&[0.0, 0.0]]));
        let loss = tape.cross_entropy_loss(&z, &[0]).unwrap();
        let grads = tape.backward(loss.node().unwrap()).unwrap();
        let gz = grads.get(z.node().unwrap()).unwrap();
        assert!((gz.data()[0] - -0.5).abs() < 1e-12);
        assert!((gz.data()[1] - 0.5).abs() < 1e-12);
        // Cross-check against central differences.
        let err = finite_diff_check(
            |tape, x| tape.cross_entropy_loss(x, &[0]),
            &t2(&[&[0.0, 0.0]]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "finite-difference disagreement: {err}");
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::vector(vec![1.0, 2.0]));
        let y = tape.relu(&x).unwrap();
        assert!(tape.backward(y.node().unwrap()).is_err());
    }

    #[test]
    fn shape_mismatch_names_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(&t2(&[&[1.0, 2.0]]));
        let b = tape.leaf(&t2(&[&[1.0], &[2.0]]));
        let err = tape.add(&a, &b).unwrap_err();
        assert!(err.to_string().contains("add"));
    }

    #[test]
    fn finite_diff_on_plain_sum() {
        let err = finite_diff_check(
            |tape, x| tape.sum_axis(x, 0),
            &Tensor::vector(vec![0.3, -1.4, 2.2, 0.07]),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-10, "sum gradient should be exact: {err}");
    }

    #[test]
    fn finite_diff_on_relu_away_from_kink() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = Tensor::vector(
            (0..12)
                .map(|_| {
                    let v: f64 = rng.gen_range(0.1..1.0);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect(),
        );
        let err = finite_diff_check(
            |tape, x| {
                let r = tape.relu(x)?;
                tape.sum_axis(&r, 0)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relu gradient off-kink: {err}");
    }

    /// A small randomly wired two-layer network touching most op kinds.
    fn random_net_loss(tape: &mut Tape, x: &Tensor, seed: u64) -> crate::error::Result<Tensor> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = x.cols();
        let mk = |rng: &mut ChaCha8Rng, r: usize, c: usize| {
            Tensor::new(
                vec![r, c],
                (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        };
        let w1 = mk(&mut rng, d, d);
        let w2 = mk(&mut rng, d, 3);
        let h = tape.matmul(x, &w1)?;
        let h = tape.relu(&h)?;
        let s = tape.row_softmax(&h)?;
        let mixed = tape.mul(&h, &s)?;
        let logits = tape.matmul(&mixed, &w2)?;
        let labels: Vec<usize> = (0..x.rows()).map(|i| i % 3).collect();
        tape.cross_entropy_loss(&logits, &labels)
    }

    #[test]
    fn finite_diff_on_random_nets() {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let x = Tensor::new(
                vec![4, 5],
                (0..20).map(|_| rng.gen_range(-1.5..1.5)).collect(),
            )
            .unwrap();
            let err = finite_diff_check(|t, x| random_net_loss(t, x, seed), &x, 1e-5).unwrap();
            assert!(err < 1e-4, "seed {seed}: rel error {err}");
        }
    }

    #[test]
    fn vjp_linear_map() {
        // source = 3 * boundary, upstream 1 -> contribution 3
        let mut tape = Tape::new();
        let b = tape.leaf(&Tensor::scalar(1.5));
        let s = tape.scalar_mul(&b, 3.0).unwrap();
        let out = tape
            .vjp_contribution(s.node().unwrap(), b.node().unwrap(), &Tensor::scalar(1.0))
            .unwrap();
        assert!(out.path_found);
        assert_eq!(out.grad.data(), &[3.0]);
    }

    #[test]
    fn vjp_sums_to_total_gradient() {
        // Two sources s1 = A·b, s2 = B·b; the contributions must add up to
        // the full backward gradient at b.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut tape = Tape::new();
        let b = tape.leaf(&Tensor::new(vec![3, 2], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap());
        let a_mat = Tensor::new(vec![2, 3], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let b_mat = Tensor::new(vec![2, 3], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let s1 = tape.matmul(&a_mat, &b).unwrap();
        let s2 = tape.matmul(&b_mat, &b).unwrap();
        let m1 = tape.mul(&s1, &s1).unwrap();
        let m2 = tape.mul(&s2, &s2).unwrap();
        let tot = tape.add(&m1, &m2).unwrap();
        let flat = tape.sum_axis(&tot, 0).unwrap();
        let loss = tape.sum_axis(&flat, 1).unwrap();
        let grads = tape.backward(loss.node().unwrap()).unwrap();

        let gb = grads.get(b.node().unwrap()).unwrap();
        let g1 = grads.get(s1.node().unwrap()).unwrap();
        let g2 = grads.get(s2.node().unwrap()).unwrap();
        let c1 = tape.vjp_contribution(s1.node().unwrap(), b.node().unwrap(), g1).unwrap();
        let c2 = tape.vjp_contribution(s2.node().unwrap(), b.node().unwrap(), g2).unwrap();
        assert!(c1.path_found && c2.path_found);
        for i in 0..gb.numel() {
            let sum = c1.grad.data()[i] + c2.grad.data()[i];
            assert!((sum - gb.data()[i]).abs() <= 1e-12 * gb.data()[i].abs().max(1.0));
        }
    }

    #[test]
    fn vjp_disconnected_is_zero() {
        let mut tape = Tape::new();
        let a = tape.leaf(&Tensor::scalar(1.0));
        let b = tape.leaf(&Tensor::scalar(2.0));
        let s = tape.scalar_mul(&a, 2.0).unwrap();
        let out = tape
            .vjp_contribution(s.node().unwrap(), b.node().unwrap(), &Tensor::scalar(1.0))
            .unwrap();
        assert!(!out.path_found);
        assert_eq!(out.grad.data(), &[0.0]);
    }

    #[test]
    fn tapes_are_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let x = tape.leaf(
                &Tensor::new(vec![4, 5], (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap(),
            );
            let loss = random_net_loss(&mut tape, &x, 3).unwrap();
            let grads = tape.backward(loss.node().unwrap()).unwrap();
            (loss.data().to_vec(), grads.get(x.node().unwrap()).unwrap().data().to_vec())
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert!(l1.iter().zip(&l2).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn gather_scatter_round_trip_gradients() {
        let err = finite_diff_check(
            |tape, x| {
                let g = tape.gather(x, &[0, 2, 1, 2])?;
                let s = tape.scatter_add(&g, &[1, 0, 1, 2], 3)?;
                let m = tape.mul(&s, &s)?;
                let c = tape.sum_axis(&m, 0)?;
                tape.sum_axis(&c, 1)
            },
            &t2(&[&[0.5, -0.3], &[1.2, 0.8], &[-0.7, 0.4]]),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "gather/scatter gradient: {err}");
    }

    #[test]
    fn concat_and_reduction_gradients() {
        let err = finite_diff_check(
            |tape, x| {
                let t = tape.transpose(x)?;
                let back = tape.transpose(&t)?;
                let joined = tape.concat(&[x, &back], 1)?;
                let m = tape.mean_axis(&joined, 0)?;
                let s = tape.row_softmax(&m)?;
                let p = tape.mul(&m, &s)?;
                tape.sum_axis(&p, 1)
            },
            &t2(&[&[0.5, -0.3, 0.9], &[1.2, 0.8, -1.1]]),
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-7, "concat/transpose gradient: {err}");
    }
}
