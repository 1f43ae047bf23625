// SPDX-License-Identifier: Apache-2.0

//! Finite-difference checks for every primitive on the tape.

use std::sync::Arc;

use diffplace_grad::{GradError, Tape, Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
    Tensor::from_vec(vec![rows, cols], data).unwrap()
}

/// Builds `sum(f(params) * R)` for a fixed random projection `R`.
fn projected_loss(tape: &mut Tape, out: Var, seed: u64) -> Var {
    let (r, c) = tape.shape(out);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcdef);
    let proj: Vec<f64> = (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pv = tape.constant(r, c, proj).unwrap();
    let prod = tape.mul(out, pv).unwrap();
    tape.sum(prod)
}

/// Compares analytic gradients with central differences, returning the
/// worst norm-wise relative error over all parameters.
fn check<F>(params: &[Tensor], h: f64, build: F) -> f64
where
    F: Fn(&mut Tape, &[Var]) -> Var,
{
    let eval = |ps: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p)).collect();
        let out = build(&mut tape, &vars);
        let loss = projected_loss(&mut tape, out, 7);
        tape.value(loss)[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let out = build(&mut tape, &vars);
    let loss = projected_loss(&mut tape, out, 7);
    let grads = tape.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (pi, p) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[pi], p.len());
        let mut numeric = vec![0.0; p.len()];
        for k in 0..p.len() {
            let mut plus = params.to_vec();
            plus[pi].data_mut()[k] += h;
            let mut minus = params.to_vec();
            minus[pi].data_mut()[k] -= h;
            numeric[k] = (eval(&plus) - eval(&minus)) / (2.0 * h);
        }
        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / na.max(nn).max(1e-12);
        worst = worst.max(rel);
    }
    worst
}

const TOL: f64 = 1e-6;

#[test]
fn grad_matmul_and_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ps = [
        rand_tensor(&mut rng, 5, 4, 1.0),
        rand_tensor(&mut rng, 4, 3, 1.0),
        rand_tensor(&mut rng, 1, 3, 1.0),
    ];
    let err = check(&ps, 1e-5, |t, v| t.linear(v[0], v[1], v[2]).unwrap());
    assert!(err < TOL, "rel err {err}");
}

#[test]
fn grad_add_sub_mul_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ps = [rand_tensor(&mut rng, 3, 4, 1.0), rand_tensor(&mut rng, 3, 4, 1.0)];
    let err = check(&ps, 1e-5, |t, v| {
        let a = t.add(v[0], v[1]).unwrap();
        let b = t.sub(v[0], v[1]).unwrap();
        let c = t.mul(a, b).unwrap();
        t.scale(c, -1.7)
    });
    assert!(err < TOL, "rel err {err}");
}

#[test]
fn grad_concat() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ps = [rand_tensor(&mut rng, 3, 2, 1.0), rand_tensor(&mut rng, 3, 5, 1.0)];
    let err = check(&ps, 1e-5, |t, v| t.concat(&[v[0], v[1], v[0]]).unwrap());
    assert!(err < TOL, "rel err {err}");
}

#[test]
fn grad_gelu_leaky() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let ps = [rand_tensor(&mut rng, 4, 6, 2.0)];
    let err = check(&ps, 1e-5, |t, v| t.gelu(v[0]));
    assert!(err < TOL, "gelu rel err {err}");
    let err = check(&ps, 1e-6, |t, v| t.leaky_relu(v[0], 0.2));
    assert!(err < TOL, "leaky rel err {err}");
}

#[test]
fn grad_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ps = [
        rand_tensor(&mut rng, 4, 6, 2.0),
        rand_tensor(&mut rng, 1, 6, 1.0),
        rand_tensor(&mut rng, 1, 6, 1.0),
    ];
    let err = check(&ps, 1e-5, |t, v| t.layer_norm(v[0], v[1], v[2]).unwrap());
    assert!(err < TOL, "rel err {err}");
}

#[test]
fn grad_softmax_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ps = [rand_tensor(&mut rng, 3, 5, 2.0)];
    let err = check(&ps, 1e-5, |t, v| t.softmax_rows(v[0]));
    assert!(err < TOL, "rel err {err}");
}

fn random_segments(rng: &mut ChaCha8Rng, e: usize, n: usize) -> Arc<[usize]> {
    (0..e).map(|_| rng.random_range(0..n)).collect::<Vec<_>>().into()
}

#[test]
fn grad_gather_segment_sum_max_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let idx = random_segments(&mut rng, 11, 5);
    let seg = random_segments(&mut rng, 11, 4);
    let ps = [rand_tensor(&mut rng, 5, 3, 1.0)];
    let err = check(&ps, 1e-5, |t, v| {
        let g = t.gather_rows(v[0], &idx).unwrap();
        t.segment_sum(g, &seg, 4).unwrap()
    });
    assert!(err < TOL, "segment_sum rel err {err}");

    let ps = [rand_tensor(&mut rng, 11, 3, 1.0)];
    let err = check(&ps, 1e-6, |t, v| t.segment_max(v[0], &seg, 4).unwrap());
    assert!(err < TOL, "segment_max rel err {err}");

    let err = check(&ps, 1e-5, |t, v| t.segment_softmax(v[0], &seg, 4).unwrap());
    assert!(err < TOL, "segment_softmax rel err {err}");
}

#[test]
fn grad_head_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ps = [rand_tensor(&mut rng, 6, 8, 1.0), rand_tensor(&mut rng, 1, 8, 1.0)];
    let err = check(&ps, 1e-5, |t, v| {
        let d = t.head_dot(v[0], v[1], 2).unwrap();
        t.head_scale(v[0], d).unwrap()
    });
    assert!(err < TOL, "rel err {err}");
}

#[test]
fn grad_segment_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let ranges: Arc<[(usize, usize)]> = vec![(0, 3), (3, 3), (3, 7)].into();
    let ps = [
        rand_tensor(&mut rng, 7, 6, 1.0),
        rand_tensor(&mut rng, 7, 6, 1.0),
        rand_tensor(&mut rng, 7, 6, 1.0),
    ];
    let err = check(&ps, 1e-5, |t, v| {
        t.segment_attention(v[0], v[1], v[2], &ranges, 3).unwrap()
    });
    assert!(err < TOL, "rel err {err}");
}

#[test]
fn grad_masked_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let target: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mask = [true, false, true, true];
    let ps = [rand_tensor(&mut rng, 4, 2, 1.0)];
    let err = check(&ps, 1e-5, |t, v| t.masked_mse(v[0], &target, Some(&mask)).unwrap());
    assert!(err < TOL, "rel err {err}");
}

/// Two-layer perceptron with layer norm, checked on 100 random parameters.
#[test]
fn composite_mlp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&mut rng, 6, 5, 1.0);
    let target: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut params = vec![
        rand_tensor(&mut rng, 5, 8, 0.5),
        rand_tensor(&mut rng, 1, 8, 0.1),
        rand_tensor(&mut rng, 1, 8, 1.0),
        rand_tensor(&mut rng, 1, 8, 0.1),
        rand_tensor(&mut rng, 8, 2, 0.5),
        rand_tensor(&mut rng, 1, 2, 0.1),
    ];
    params[2].data_mut().iter_mut().for_each(|g| *g += 1.0);

    let loss_of = |ps: &[Tensor]| -> (f64, Vec<Vec<f64>>) {
        let mut t = Tape::new();
        let xv = t.constant(6, 5, x.data().to_vec()).unwrap();
        let v: Vec<Var> = ps.iter().map(|p| t.param(p)).collect();
        let h = t.linear(xv, v[0], v[1]).unwrap();
        let h = t.layer_norm(h, v[2], v[3]).unwrap();
        let h = t.gelu(h);
        let y = t.linear(h, v[4], v[5]).unwrap();
        let loss = t.masked_mse(y, &target, None).unwrap();
        let val = t.value(loss)[0];
        let g = t.backward(loss).unwrap();
        (
            val,
            v.iter().zip(ps).map(|(&vi, p)| g.get_or_zeros(vi, p.len())).collect(),
        )
    };
    let (_, analytic) = loss_of(&params);
    let h = 1e-5;
    let mut checked = 0;
    let mut sample = ChaCha8Rng::seed_from_u64(12);
    while checked < 100 {
        let pi = sample.random_range(0..params.len());
        let k = sample.random_range(0..params[pi].len());
        let mut p = params.clone();
        p[pi].data_mut()[k] += h;
        let (lp, _) = loss_of(&p);
        p[pi].data_mut()[k] -= 2.0 * h;
        let (lm, _) = loss_of(&p);
        let num = (lp - lm) / (2.0 * h);
        let ana = analytic[pi][k];
        let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
        assert!(rel <= 1e-4, "param {pi}[{k}]: analytic {ana} numeric {num}");
        checked += 1;
    }
}

#[test]
fn sum_of_squares_gradient() {
    let w = Tensor::from_vec(vec![2, 2], vec![0.5, -1.0, 2.0, 3.0]).unwrap();
    let mut t = Tape::new();
    let v = t.param(&w);
    let sq = t.mul(v, v).unwrap();
    let loss = t.sum(sq);
    let g = t.backward(loss).unwrap();
    assert_eq!(g.get(v).unwrap(), &[1.0, -2.0, 4.0, 6.0]);
}

#[test]
fn second_backward_is_rejected() {
    let mut t = Tape::new();
    let v = t.param(&Tensor::scalar(2.0));
    let loss = t.mul(v, v).unwrap();
    t.backward(loss).unwrap();
    assert_eq!(t.backward(loss).err(), Some(GradError::TapeConsumed));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut t = Tape::new();
    let v = t.param(&Tensor::zeros(vec![2, 3]));
    assert!(matches!(
        t.backward(v),
        Err(GradError::NonScalarLoss { rows: 2, cols: 3 })
    ));
}

#[test]
fn shape_mismatch_names_primitive() {
    let mut t = Tape::new();
    let a = t.param(&Tensor::zeros(vec![2, 3]));
    let b = t.param(&Tensor::zeros(vec![2, 3]));
    let err = t.matmul(a, b).unwrap_err();
    assert!(err.to_string().starts_with("matmul"));
}

#[test]
fn matmul_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let a = rand_tensor(&mut rng, 4, 3, 1.0);
    let mut eye = Tensor::zeros(vec![3, 3]);
    for i in 0..3 {
        eye.data_mut()[i * 3 + i] = 1.0;
    }
    let mut t = Tape::new();
    let av = t.param(&a);
    let iv = t.param(&eye);
    let out = t.matmul(av, iv).unwrap();
    assert_eq!(t.value(out), a.data());
}

#[test]
fn softmax_of_uniform_is_uniform() {
    let mut t = Tape::new();
    let v = t.constant(2, 4, vec![3.0; 8]).unwrap();
    let s = t.softmax_rows(v);
    assert!(t.value(s).iter().all(|&p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn segment_sum_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (e, n, c) = (200, 17, 3);
    let seg = random_segments(&mut rng, e, n);
    let x = rand_tensor(&mut rng, e, c, 1.0);
    let mut t = Tape::new();
    let xv = t.param(&x);
    let out = t.segment_sum(xv, &seg, n).unwrap();
    for target in 0..n {
        for j in 0..c {
            let mut acc = 0.0;
            for k in 0..e {
                if seg[k] == target {
                    acc += x.data()[k * c + j];
                }
            }
            assert_eq!(t.value(out)[target * c + j], acc);
        }
    }
}

#[test]
fn untracked_inputs_record_nothing_for_backward() {
    let mut t = Tape::new();
    let a = t.constant(1, 2, vec![1.0, 2.0]).unwrap();
    let b = t.gelu(a);
    let p = t.param(&Tensor::from_vec(vec![1, 2], vec![1.0, 1.0]).unwrap());
    let c = t.mul(b, p).unwrap();
    let loss = t.sum(c);
    let g = t.backward(loss).unwrap();
    assert!(g.get(a).is_none());
    assert!(g.get(p).is_some());
}

#[test]
fn gradients_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let q = rand_tensor(&mut rng, 9, 4, 1.0);
    let ranges: Arc<[(usize, usize)]> = vec![(0, 4), (4, 9)].into();
    let run = || {
        let mut t = Tape::new();
        let v = t.param(&q);
        let o = t.segment_attention(v, v, v, &ranges, 2).unwrap();
        let l = t.sum(o);
        let l2 = t.mul(l, l).unwrap();
        t.backward(l2).unwrap().get(v).unwrap().to_vec()
    };
    assert_eq!(run(), run());
}

proptest! {
    #[test]
    fn segment_softmax_normalizes(vals in prop::collection::vec(-20.0f64..20.0, 1..40), n in 1usize..6) {
        let e = vals.len();
        let seg: Arc<[usize]> = (0..e).map(|i| (i * 7 + 3) % n).collect::<Vec<_>>().into();
        let mut t = Tape::new();
        let v = t.constant(e, 1, vals).unwrap();
        let s = t.segment_softmax(v, &seg, n).unwrap();
        let mut totals = vec![0.0; n];
        for (i, &g) in seg.iter().enumerate() {
            totals[g] += t.value(s)[i];
        }
        for (g, tot) in totals.iter().enumerate() {
            if seg.contains(&g) {
                prop_assert!((tot - 1.0).abs() < 1e-12);
            }
        }
    }
}
