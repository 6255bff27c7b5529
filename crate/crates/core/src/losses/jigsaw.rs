use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::LossError;

const ROW_TOLERANCE: f64 = 1e-6;
const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JigsawReduction {
    /// Sum over patches.
    #[default]
    Sum,
    /// Mean over patches.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JigsawLoss {
    pub value: f64,
    /// Patches whose true-position probability was zero and got clamped.
    pub clamped: usize,
}

fn check_permutation(positions: &[usize], cells: usize) -> Result<(), LossError> {
    let mut seen = vec![false; cells];
    if positions.len() != cells {
        return Err(LossError::NotAPermutation(cells));
    }
    for &p in positions {
        if p >= cells || std::mem::replace(&mut seen[p], true) {
            return Err(LossError::NotAPermutation(cells));
        }
    }
    Ok(())
}

/// Position cross-entropy: −Σ_s log probs[s, positions[s]].
///
/// Row `s` of `probs` is the predicted distribution over grid cells for patch `s`.
pub fn jigsaw_loss(
    probs: ArrayView2<f64>,
    positions: &[usize],
    reduction: JigsawReduction,
) -> Result<JigsawLoss, LossError> {
    let (rows, cells) = probs.dim();
    if rows != cells {
        return Err(LossError::ShapeMismatch(format!("{rows}x{cells} position matrix")));
    }
    check_permutation(positions, cells)?;
    let mut value = 0.0;
    let mut clamped = 0;
    for (s, row) in probs.outer_iter().enumerate() {
        if let Some(&bad) = row.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(LossError::InvalidProbability { row: s, value: bad });
        }
        let sum = row.sum();
        if (sum - 1.0).abs() > ROW_TOLERANCE {
            return Err(LossError::RowNotNormalized { row: s, sum });
        }
        let p = row[positions[s]];
        if p <= 0.0 {
            clamped += 1;
        }
        value -= p.max(PROB_FLOOR).ln();
    }
    if reduction == JigsawReduction::Mean {
        value /= rows as f64;
    }
    Ok(JigsawLoss { value, clamped })
}

/// Row-wise softmax.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.outer_iter_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    out
}

/// Jigsaw loss through a softmax, with the gradient with respect to the logits.
pub fn jigsaw_loss_from_logits(
    logits: ArrayView2<f64>,
    positions: &[usize],
    reduction: JigsawReduction,
) -> Result<(f64, Array2<f64>), LossError> {
    let (rows, cells) = logits.dim();
    if rows != cells {
        return Err(LossError::ShapeMismatch(format!("{rows}x{cells} logit matrix")));
    }
    check_permutation(positions, cells)?;
    let probs = softmax_rows(logits);
    let scale = match reduction {
        JigsawReduction::Sum => 1.0,
        JigsawReduction::Mean => 1.0 / rows as f64,
    };
    let mut value = 0.0;
    let mut grad = probs.clone();
    for (s, &t) in positions.iter().enumerate() {
        // log-softmax directly for accuracy
        let row = logits.row(s);
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        value += lse - row[t];
        grad[[s, t]] -= 1.0;
    }
    grad *= scale;
    Ok((value * scale, grad))
}
