mod common;

use common::*;
use ndarray::{array, Array2, Array3};
use proptest::prelude::*;
use rand::Rng;
use sslscene::losses::*;

fn cfg(tau: f64) -> ContrastiveConfig {
    ContrastiveConfig::new(tau)
}

fn batch(e: &Array2<f64>) -> EmbeddingBatch {
    EmbeddingBatch::new(e.clone()).unwrap()
}

#[test]
fn nt_xent_matches_loop_oracle_on_random_batches() {
    let mut rng = seeded(2024);
    for _ in 0..100 {
        let (n, _, tau, e) = random_case(&mut rng);
        let b = batch(&e);
        let got = nt_xent_batch(&b, &cfg(tau)).unwrap();
        assert!(rel_err(got, oracle_batch(&e, tau)) < 1e-9, "N={n} tau={tau}");
        for i in 0..2 * n {
            let j = i ^ 1;
            let pair = nt_xent_pair(&b, i, j, &cfg(tau)).unwrap();
            assert!(rel_err(pair, oracle_pair(&e, i, j, tau)) < 1e-9);
        }
        let (with_grad, _) = nt_xent_batch_with_grad(&b, &cfg(tau)).unwrap();
        assert!(rel_err(with_grad, got) < 1e-12);
    }
}

#[test]
fn single_pair_loss_is_zero() {
    let e = array![[0.3, -2.0, 1.0], [5.0, 0.1, -0.4]];
    assert!(nt_xent_batch(&batch(&e), &cfg(0.5)).unwrap().abs() < 1e-12);
    assert!(nt_xent_pair(&batch(&e), 0, 1, &cfg(0.1)).unwrap().abs() < 1e-12);
}

#[test]
fn symmetric_two_pair_anchor() {
    let e = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
    let expected = ((std::f64::consts::E + 2.0) / std::f64::consts::E).ln();
    assert!((expected - 0.5514).abs() < 1e-4);
    assert!((oracle_pair(&e, 0, 1, 1.0) - expected).abs() < 1e-12);
    for i in 0..4 {
        assert!((nt_xent_pair(&batch(&e), i, i ^ 1, &cfg(1.0)).unwrap() - expected).abs() < 1e-12);
    }
    assert!((nt_xent_batch(&batch(&e), &cfg(1.0)).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn loss_falls_with_temperature_when_positives_align() {
    let e = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    let values: Vec<f64> = [1.0, 0.5, 0.1]
        .iter()
        .map(|&t| nt_xent_pair(&batch(&e), 0, 1, &cfg(t)).unwrap())
        .collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
}

#[test]
fn unpaired_indices_are_rejected() {
    let e = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
    assert_eq!(nt_xent_pair(&batch(&e), 0, 2, &cfg(1.0)), Err(LossError::NotAPositivePair { i: 0, j: 2 }));
    assert!(matches!(EmbeddingBatch::new(Array2::zeros((3, 2))), Err(LossError::OddBatch(3))));
}

#[test]
fn jigsaw_anchors() {
    let uniform = Array2::from_elem((9, 9), 1.0 / 9.0);
    let positions: Vec<usize> = (0..9).rev().collect();
    let v = jigsaw_loss(uniform.view(), &positions, JigsawReduction::Sum).unwrap().value;
    assert!((v - 9.0 * 9f64.ln()).abs() < 1e-9);
    assert!((v - 19.7750).abs() < 1e-4);
    assert!((oracle_jigsaw(&uniform, &positions) - v).abs() < 1e-12);

    let mut onehot = Array2::<f64>::zeros((9, 9));
    for (s, &p) in positions.iter().enumerate() {
        onehot[[s, p]] = 1.0;
    }
    assert_eq!(jigsaw_loss(onehot.view(), &positions, JigsawReduction::Sum).unwrap().value, 0.0);
    onehot.row_mut(4).fill(0.9 / 8.0);
    onehot[[4, positions[4]]] = 0.1;
    let v = jigsaw_loss(onehot.view(), &positions, JigsawReduction::Sum).unwrap().value;
    assert!((v - 10f64.ln()).abs() < 1e-12);
}

#[test]
fn inpaint_anchors() {
    let target = Array3::from_shape_fn((2, 3, 3), |(c, y, x)| (c * 9 + y * 3 + x) as f64 * 0.25);
    let all = Array2::from_elem((3, 3), true);
    assert_eq!(inpaint_loss(target.view(), target.view(), all.view(), Region::Full).unwrap(), 0.0);
    let shifted = &target + 1.0;
    assert_eq!(inpaint_loss(shifted.view(), target.view(), all.view(), Region::Full).unwrap(), 1.0);
    let mut mask = Array2::from_elem((3, 3), false);
    mask[[0, 0]] = true;
    assert_eq!(inpaint_loss(shifted.view(), target.view(), mask.view(), Region::Masked).unwrap(), 1.0);

    let pred = array![[[1.0, 1.0], [0.0, 0.0]]];
    let zero = Array3::<f64>::zeros((1, 2, 2));
    let m = Array2::from_elem((2, 2), true);
    let v = inpaint_loss(pred.view(), zero.view(), m.view(), Region::Full).unwrap();
    assert_eq!(v, 0.5);
    assert_eq!(v, oracle_mse(&pred, &zero));
    let none = Array2::from_elem((2, 2), false);
    assert_eq!(inpaint_loss(pred.view(), zero.view(), none.view(), Region::Masked), Err(LossError::EmptyMask));
}

#[test]
fn quadratic_gradient_check() {
    let x = vec![0.3, -1.2, 2.5, 0.01];
    let analytic: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let check = grad_check(|v| v.iter().map(|a| a * a).sum(), &analytic, &x, 1e-5, Scheme::Central).unwrap();
    assert!(check.max_rel_error <= 1e-7, "{}", check.max_rel_error);
}

/// Loss of a linear projection `z = h·w` followed by NT-Xent, as a function of the flat
/// inputs `[h | w]`.
fn projected_loss(flat: &[f64], rows: usize, din: usize, dout: usize, tau: f64) -> f64 {
    let h = Array2::from_shape_vec((rows, din), flat[..rows * din].to_vec()).unwrap();
    let w = Array2::from_shape_vec((din, dout), flat[rows * din..].to_vec()).unwrap();
    nt_xent_batch(&batch(&h.dot(&w)), &cfg(tau)).unwrap()
}

#[test]
fn nt_xent_gradient_through_projection() {
    let mut rng = seeded(5);
    for _ in 0..10 {
        let n = rng.random_range(1..=6);
        let (din, dout) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let tau = rng.random_range(0.1..=1.0);
        let h = random_batch(&mut rng, n, din);
        let w = Array2::from_shape_fn((din, dout), |_| rng.random_range(-1.0..1.0));
        let z = h.dot(&w);
        let (_, gz) = nt_xent_batch_with_grad(&batch(&z), &cfg(tau)).unwrap();
        let gh = gz.dot(&w.t());
        let gw = h.t().dot(&gz);
        let analytic: Vec<f64> = gh.iter().chain(gw.iter()).copied().collect();
        let flat: Vec<f64> = h.iter().chain(w.iter()).copied().collect();
        let rows = 2 * n;
        let check =
            grad_check(|x| projected_loss(x, rows, din, dout, tau), &analytic, &flat, 1e-6, Scheme::Central).unwrap();
        assert!(check.max_rel_error <= 1e-4, "N={n}: {}", check.max_rel_error);
    }
}

#[test]
fn jigsaw_and_inpaint_gradients() {
    let mut rng = seeded(9);
    for _ in 0..10 {
        let logits = Array2::from_shape_fn((9, 9), |_| rng.random_range(-3.0..3.0));
        let mut positions: Vec<usize> = (0..9).collect();
        rand::seq::SliceRandom::shuffle(&mut positions[..], &mut rng);
        for reduction in [JigsawReduction::Sum, JigsawReduction::Mean] {
            let (_, g) = jigsaw_loss_from_logits(logits.view(), &positions, reduction).unwrap();
            let f = |x: &[f64]| {
                let l = Array2::from_shape_vec((9, 9), x.to_vec()).unwrap();
                jigsaw_loss(softmax_rows(l.view()).view(), &positions, reduction).unwrap().value
            };
            let x: Vec<f64> = logits.iter().copied().collect();
            let check = grad_check(f, g.as_slice().unwrap(), &x, 1e-6, Scheme::Central).unwrap();
            assert!(check.max_rel_error <= 1e-4, "{}", check.max_rel_error);
        }

        let target = Array3::from_shape_fn((2, 5, 5), |_| rng.random_range(-1.0..1.0));
        let pred = Array3::from_shape_fn((2, 5, 5), |_| rng.random_range(-1.0..1.0));
        let mask = Array2::from_shape_fn((5, 5), |(y, x)| (y + x) % 3 == 0);
        for region in [Region::Full, Region::Masked] {
            let (_, g) = inpaint_loss_with_grad(pred.view(), target.view(), mask.view(), region).unwrap();
            let f = |x: &[f64]| {
                let p = Array3::from_shape_vec((2, 5, 5), x.to_vec()).unwrap();
                inpaint_loss(p.view(), target.view(), mask.view(), region).unwrap()
            };
            let x: Vec<f64> = pred.iter().copied().collect();
            let masked_out: Vec<usize> = (0..50).filter(|i| !mask[[(i % 25) / 5, i % 5]]).collect();
            let check = grad_check(f, g.as_slice().unwrap(), &x, 1e-6, Scheme::Central).unwrap();
            assert!(check.max_rel_error <= 1e-4, "{region:?}: {}", check.max_rel_error);
            if region == Region::Masked {
                assert!(masked_out.iter().all(|&i| g.as_slice().unwrap()[i] == 0.0));
            }
        }
    }
}

fn embeddings(max_n: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1..=max_n, 2usize..=16).prop_flat_map(|(n, d)| {
        (Just(n), Just(d), prop::collection::vec(-1.0f64..1.0, 2 * n * d))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nt_xent_is_scale_invariant((n, d, v) in embeddings(8), tau in 0.05f64..=1.0, c in 0.01f64..100.0) {
        let e = Array2::from_shape_vec((2 * n, d), v).unwrap();
        prop_assume!(e.rows().into_iter().all(|r| r.dot(&r) > 1e-6));
        let a = nt_xent_batch(&batch(&e), &cfg(tau)).unwrap();
        let b = nt_xent_batch(&batch(&(&e * c)), &cfg(tau)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn nt_xent_ignores_pair_order((n, d, v) in embeddings(8), tau in 0.05f64..=1.0, seed in any::<u64>(), swap in any::<bool>()) {
        let e = Array2::from_shape_vec((2 * n, d), v).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut seeded(seed));
        let mut p = Array2::<f64>::zeros(e.raw_dim());
        for (dst, &src) in order.iter().enumerate() {
            let (a, b) = if swap { (1, 0) } else { (0, 1) };
            p.row_mut(2 * dst).assign(&e.row(2 * src + a));
            p.row_mut(2 * dst + 1).assign(&e.row(2 * src + b));
        }
        let x = nt_xent_batch(&batch(&e), &cfg(tau)).unwrap();
        let y = nt_xent_batch(&batch(&p), &cfg(tau)).unwrap();
        prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn nt_xent_is_nonnegative_and_matches_oracle((n, d, v) in embeddings(8), tau in 0.05f64..=1.0) {
        let e = Array2::from_shape_vec((2 * n, d), v).unwrap();
        let b = batch(&e);
        for i in 0..2 * n {
            prop_assert!(nt_xent_pair(&b, i, i ^ 1, &cfg(tau)).unwrap() >= 0.0);
        }
        let got = nt_xent_batch(&b, &cfg(tau)).unwrap();
        prop_assert!(got >= 0.0);
        prop_assert!(rel_err(got, oracle_batch(&e, tau)) < 1e-9);
    }

    #[test]
    fn cosine_similarity_is_bounded(u in prop::collection::vec(-10.0f64..10.0, 1..12), seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let v: Vec<f64> = u.iter().map(|_| rng.random_range(-10.0..10.0)).collect();
        let s = cosine_sim(ndarray::aview1(&u), ndarray::aview1(&v), 1e-8);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s));
    }
}

#[test]
fn cosine_examples() {
    let s = |a: [f64; 2], b: [f64; 2]| cosine_sim(ndarray::aview1(&a), ndarray::aview1(&b), 1e-8);
    assert_eq!(s([1.0, 0.0], [1.0, 0.0]), 1.0);
    assert_eq!(s([1.0, 0.0], [0.0, 1.0]), 0.0);
    assert!((s([1.0, 1.0], [1.0, 0.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert_eq!(s([0.0, 0.0], [1.0, 0.0]), 0.0);
}
