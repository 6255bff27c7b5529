use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AugmentError;
use crate::datasets::RasterSample;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskShape {
    Rectangle,
    /// Several disjoint rectangles sharing the drawn coverage.
    MultiRect(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fill {
    /// Per-band mean of the dataset (or of the sample when no dataset statistics are given).
    DatasetMean,
    Zero,
}

/// Inpainting mask geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSpec {
    /// Masked fraction of the image area, drawn uniformly.
    pub coverage_range: (f32, f32),
    pub shape: MaskShape,
    pub fill: Fill,
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec {
            coverage_range: (0.15, 0.35),
            shape: MaskShape::Rectangle,
            fill: Fill::DatasetMean,
        }
    }
}

impl MaskSpec {
    /// Allowed masked-pixel counts for an `h`×`w` image.
    fn area_bounds(&self, h: usize, w: usize) -> Result<(usize, usize), AugmentError> {
        let (lo, hi) = self.coverage_range;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(AugmentError::InfeasibleCoverage(format!(
                "coverage_range ({lo}, {hi}) must satisfy 0 < lo <= hi < 1"
            )));
        }
        if let MaskShape::MultiRect(0) = self.shape {
            return Err(AugmentError::InfeasibleCoverage("multi-rect needs at least one rectangle".into()));
        }
        let total = (h * w) as f64;
        let min = (lo as f64 * total - 1e-6).ceil().max(1.0) as usize;
        let max = (hi as f64 * total + 1e-6).floor() as usize;
        if min > max {
            return Err(AugmentError::InfeasibleCoverage(format!(
                "no pixel count in [{lo}, {hi}] of a {h}x{w} image"
            )));
        }
        Ok((min, max))
    }
}

/// Rectangle dimensions with area in `[min, max]`, closest to `target`, then to aspect `ratio`.
fn rect_dims(h: usize, w: usize, target: usize, min: usize, max: usize, ratio: f64) -> Option<(usize, usize)> {
    let mut best: Option<((usize, f64), (usize, usize))> = None;
    for rh in 1..=h {
        let ideal = target as f64 / rh as f64;
        for rw in [ideal.floor() as usize, ideal.ceil() as usize] {
            let rw = rw.clamp(1, w);
            let area = rh * rw;
            if area < min || area > max {
                continue;
            }
            let score = (area.abs_diff(target), ((rh as f64 / rw as f64).ln() - ratio.ln()).abs());
            if best.is_none_or(|(b, _)| score.0 < b.0 || (score.0 == b.0 && score.1 < b.1)) {
                best = Some((score, (rh, rw)));
            }
        }
    }
    best.map(|(_, d)| d)
}

fn draw_mask(h: usize, w: usize, spec: &MaskSpec, rng: &mut ChaCha8Rng) -> Result<Array2<bool>, AugmentError> {
    let (min, max) = spec.area_bounds(h, w)?;
    let (lo, hi) = spec.coverage_range;
    let coverage = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    let target = ((coverage as f64 * (h * w) as f64).round() as usize).clamp(min, max);
    let count = match spec.shape {
        MaskShape::Rectangle => 1,
        MaskShape::MultiRect(n) => n,
    };
    let ln2 = std::f64::consts::LN_2;
    for _ in 0..50 {
        let mut mask = Array2::from_elem((h, w), false);
        let mut placed = 0usize;
        let mut ok = true;
        for k in 0..count {
            let share = if k + 1 == count {
                target.saturating_sub(placed)
            } else {
                target / count
            };
            let ratio = rng.random_range(-ln2..ln2).exp();
            let last = k + 1 == count;
            let rect_min = if last { min.saturating_sub(placed).max(1) } else { 1 };
            let rect_max = if last { max.saturating_sub(placed) } else { share.max(1) };
            if rect_min > rect_max {
                ok = false;
                break;
            }
            let Some((rh, rw)) = rect_dims(h, w, share.max(1), rect_min, rect_max, ratio) else {
                ok = false;
                break;
            };
            let mut found = false;
            for _ in 0..100 {
                let top = rng.random_range(0..=h - rh);
                let left = rng.random_range(0..=w - rw);
                let mut region = mask.slice_mut(ndarray::s![top..top + rh, left..left + rw]);
                if region.iter().any(|&m| m) {
                    continue;
                }
                region.fill(true);
                placed += rh * rw;
                found = true;
                break;
            }
            if !found {
                ok = false;
                break;
            }
        }
        if ok && (min..=max).contains(&placed) {
            return Ok(mask);
        }
    }
    Err(AugmentError::InfeasibleCoverage(format!(
        "could not place {count} rectangle(s) covering [{min}, {max}] pixels"
    )))
}

/// Masks a region of the sample; see [`corrupt_with_fill`].
pub fn corrupt(sample: &RasterSample, spec: &MaskSpec, seed: u64) -> Result<(Array3<f32>, Array2<bool>), AugmentError> {
    corrupt_with_fill(sample, spec, seed, None)
}

/// Returns the corrupted image and the H×W mask (true = masked).
///
/// Outside the mask the image is untouched; inside it holds the fill value.
/// `band_means` supplies dataset statistics for [`Fill::DatasetMean`].
pub fn corrupt_with_fill(
    sample: &RasterSample,
    spec: &MaskSpec,
    seed: u64,
    band_means: Option<&[f32]>,
) -> Result<(Array3<f32>, Array2<bool>), AugmentError> {
    let (c, h, w) = sample.shape();
    let mut rng = rng::rng_str(rng::derive_str(seed, "mask"), &sample.id);
    let mask = draw_mask(h, w, spec, &mut rng)?;
    let fill: Vec<f32> = match (spec.fill, band_means) {
        (Fill::Zero, _) => vec![0.0; c],
        (Fill::DatasetMean, Some(means)) => {
            if means.len() != c {
                return Err(AugmentError::ShapeMismatch(format!(
                    "{} band means for a {c}-band sample",
                    means.len()
                )));
            }
            means.to_vec()
        }
        (Fill::DatasetMean, None) => sample
            .pixels
            .mean_axis(Axis(2))
            .and_then(|m| m.mean_axis(Axis(1)))
            .expect("non-empty sample")
            .to_vec(),
    };
    let mut corrupted = sample.pixels.clone();
    for (b, mut band) in corrupted.outer_iter_mut().enumerate() {
        ndarray::Zip::from(&mut band).and(&mask).for_each(|v, &m| {
            if m {
                *v = fill[b];
            }
        });
    }
    Ok((corrupted, mask))
}
