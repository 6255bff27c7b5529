use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::LossError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Floor on the product of norms in the cosine denominator.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1e-8
}

impl ContrastiveConfig {
    pub fn new(temperature: f64) -> Self {
        ContrastiveConfig {
            temperature,
            epsilon: default_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.temperature > 0.0) || !(self.epsilon > 0.0) {
            return Err(LossError::InvalidConfig(format!(
                "temperature {} and epsilon {} must be positive",
                self.temperature, self.epsilon
            )));
        }
        Ok(())
    }
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig::new(0.5)
    }
}

/// 2N embeddings; rows `2i` and `2i + 1` (0-based) are a positive pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    vectors: Array2<f64>,
}

impl EmbeddingBatch {
    pub fn new(vectors: Array2<f64>) -> Result<Self, LossError> {
        let rows = vectors.nrows();
        if rows < 2 || !rows.is_multiple_of(2) {
            return Err(LossError::OddBatch(rows));
        }
        if vectors.ncols() == 0 {
            return Err(LossError::ShapeMismatch("embeddings have zero dimensions".into()));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(LossError::NonFiniteEmbedding);
        }
        Ok(EmbeddingBatch { vectors })
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn pair_of(&self, i: usize) -> usize {
        i ^ 1
    }
}

/// uᵀv / max(‖u‖·‖v‖, ε).
pub fn cosine_sim(u: ArrayView1<f64>, v: ArrayView1<f64>, epsilon: f64) -> f64 {
    u.dot(&v) / (u.dot(&u).sqrt() * v.dot(&v).sqrt()).max(epsilon)
}

/// Similarities, norms and the raw dot products of the whole batch.
struct Similarity {
    sim: Array2<f64>,
    norms: Vec<f64>,
}

fn similarity(e: &Array2<f64>, epsilon: f64) -> Similarity {
    let gram = e.dot(&e.t());
    let norms: Vec<f64> = gram.diag().iter().map(|g| g.sqrt()).collect();
    let mut sim = gram;
    for ((i, k), s) in sim.indexed_iter_mut() {
        *s /= (norms[i] * norms[k]).max(epsilon);
    }
    Similarity { sim, norms }
}

/// Indices entering the denominator of anchor `i` in a batch of `n_views`: every `k ≠ i`,
/// which is one positive and `n_views − 2` negatives.
pub fn denominator_indices(n_views: usize, i: usize) -> impl Iterator<Item = usize> {
    (0..n_views).filter(move |&k| k != i)
}

/// −log of the softmax weight of `j` among all `k ≠ i`, at temperature τ.
fn row_loss(sim_row: ArrayView1<f64>, i: usize, j: usize, tau: f64) -> f64 {
    let max = denominator_indices(sim_row.len(), i)
        .map(|k| sim_row[k] / tau)
        .fold(f64::NEG_INFINITY, f64::max);
    let lse = max
        + denominator_indices(sim_row.len(), i)
            .map(|k| (sim_row[k] / tau - max).exp())
            .sum::<f64>()
            .ln();
    lse - sim_row[j] / tau
}

/// NT-Xent for the ordered positive pair (i, j).
///
/// The denominator runs over every k ≠ i, positive included, so the value is never negative.
pub fn nt_xent_pair(batch: &EmbeddingBatch, i: usize, j: usize, cfg: &ContrastiveConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    if i >= batch.len() || j != batch.pair_of(i) {
        return Err(LossError::NotAPositivePair { i, j });
    }
    let e = batch.vectors();
    let row: Vec<f64> = (0..batch.len())
        .map(|k| e.row(i).dot(&e.row(k)))
        .collect();
    let ni = row[i].sqrt();
    let sims = ndarray::Array1::from_iter((0..batch.len()).map(|k| {
        let nk = e.row(k).dot(&e.row(k)).sqrt();
        row[k] / (ni * nk).max(cfg.epsilon)
    }));
    Ok(row_loss(sims.view(), i, j, cfg.temperature).max(0.0))
}

/// Minibatch loss: the mean of ℓ(i, pair(i)) over all 2N views.
pub fn nt_xent_batch(batch: &EmbeddingBatch, cfg: &ContrastiveConfig) -> Result<f64, LossError> {
    cfg.validate()?;
    let Similarity { sim, .. } = similarity(batch.vectors(), cfg.epsilon);
    let n2 = batch.len();
    let total: f64 = (0..n2)
        .map(|i| row_loss(sim.row(i), i, i ^ 1, cfg.temperature))
        .sum();
    Ok((total / n2 as f64).max(0.0))
}

/// Minibatch loss and its gradient with respect to every embedding.
pub fn nt_xent_batch_with_grad(
    batch: &EmbeddingBatch,
    cfg: &ContrastiveConfig,
) -> Result<(f64, Array2<f64>), LossError> {
    cfg.validate()?;
    let e = batch.vectors();
    let n2 = batch.len();
    let tau = cfg.temperature;
    let Similarity { sim, norms } = similarity(e, cfg.epsilon);

    // coef[i, k] = ∂L/∂sim[i, k] from the i-th term only
    let mut coef = Array2::<f64>::zeros((n2, n2));
    let mut total = 0.0;
    for i in 0..n2 {
        let row = sim.row(i);
        total += row_loss(row, i, i ^ 1, tau);
        let max = (0..n2).filter(|&k| k != i).map(|k| row[k] / tau).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = (0..n2).filter(|&k| k != i).map(|k| (row[k] / tau - max).exp()).sum();
        for k in (0..n2).filter(|&k| k != i) {
            let p = (row[k] / tau - max).exp() / z;
            let target = if k == (i ^ 1) { 1.0 } else { 0.0 };
            coef[[i, k]] = (p - target) / (tau * n2 as f64);
        }
    }
    // sim is symmetric, so embedding a receives coef[a, k] + coef[k, a] through sim[a, k]
    let sym = &coef + &coef.t();
    let mut grad = Array2::<f64>::zeros(e.raw_dim());
    for a in 0..n2 {
        let mut g = grad.row_mut(a);
        for k in 0..n2 {
            let c = sym[[a, k]];
            if c == 0.0 {
                continue;
            }
            let denom = norms[a] * norms[k];
            if denom > cfg.epsilon {
                // ∂cos(a,k)/∂e_a = e_k/(‖a‖‖k‖) − cos(a,k)·e_a/‖a‖²
                g.scaled_add(c / denom, &e.row(k));
                g.scaled_add(-c * sim[[a, k]] / (norms[a] * norms[a]), &e.row(a));
            } else {
                g.scaled_add(c / cfg.epsilon, &e.row(k));
            }
        }
    }
    let loss = total / n2 as f64;
    debug_assert!(grad.iter().all(|v| v.is_finite()));
    Ok((loss.max(0.0), grad))
}
