//! Loop-transcribed reference losses shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use ndarray::{Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cosine similarity with explicit loops.
pub fn oracle_sim(e: &Array2<f64>, a: usize, b: usize, eps: f64) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for t in 0..e.ncols() {
        dot += e[[a, t]] * e[[b, t]];
        na += e[[a, t]] * e[[a, t]];
        nb += e[[b, t]] * e[[b, t]];
    }
    let denom = na.sqrt() * nb.sqrt();
    dot / if denom > eps { denom } else { eps }
}

/// ℓ(i, j) = −log(exp(sim(i,j)/τ) / Σ_{k≠i} exp(sim(i,k)/τ)).
pub fn oracle_pair(e: &Array2<f64>, i: usize, j: usize, tau: f64) -> f64 {
    let num = (oracle_sim(e, i, j, 1e-8) / tau).exp();
    let mut den = 0.0;
    for k in 0..e.nrows() {
        if k != i {
            den += (oracle_sim(e, i, k, 1e-8) / tau).exp();
        }
    }
    -(num / den).ln()
}

/// L = 1/(2N) Σ_p [ℓ(2p, 2p+1) + ℓ(2p+1, 2p)].
pub fn oracle_batch(e: &Array2<f64>, tau: f64) -> f64 {
    let n = e.nrows() / 2;
    let mut total = 0.0;
    for p in 0..n {
        total += oracle_pair(e, 2 * p, 2 * p + 1, tau);
        total += oracle_pair(e, 2 * p + 1, 2 * p, tau);
    }
    total / (2 * n) as f64
}

/// −Σ_s ln probs[s][positions[s]].
pub fn oracle_jigsaw(probs: &Array2<f64>, positions: &[usize]) -> f64 {
    let mut total = 0.0;
    for s in 0..probs.nrows() {
        total -= probs[[s, positions[s]]].ln();
    }
    total
}

/// Mean of squared differences over all elements.
pub fn oracle_mse(pred: &Array3<f64>, target: &Array3<f64>) -> f64 {
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(target.iter()) {
        total += (p - t) * (p - t);
    }
    total / pred.len() as f64
}

pub fn rel_err(value: f64, oracle: f64) -> f64 {
    (value - oracle).abs() / oracle.abs().max(1e-12)
}

/// A random 2N×d embedding batch with entries in [−1, 1].
pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((2 * n, d), |_| rng.random_range(-1.0..1.0))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One random oracle-equivalence case: (N, d, τ, batch).
pub fn random_case(rng: &mut ChaCha8Rng) -> (usize, usize, f64, Array2<f64>) {
    let n = rng.random_range(1..=8);
    let d = rng.random_range(2..=16);
    let tau = rng.random_range(0.05..=1.0);
    (n, d, tau, random_batch(rng, n, d))
}
