use ndarray::{s, Array3, Array4, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gaussian_blur, resize_bilinear, AugmentError};
use crate::datasets::RasterSample;
use crate::rng;

/// Stochastic view policy for instance discrimination.
///
/// Random resized crop, horizontal and vertical flips, per-band multiplicative
/// jitter and optional Gaussian blur, applied in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentPolicy {
    /// Crop area as a fraction of the image, drawn uniformly.
    pub crop_scale_range: (f32, f32),
    pub flip_h: f32,
    pub flip_v: f32,
    /// Each band is scaled by a gain drawn from `[1 - δ, 1 + δ]`.
    pub band_jitter: f32,
    pub blur_prob: f32,
    pub blur_sigma_range: (f32, f32),
    /// `None` keeps the input size.
    pub output_size: Option<(usize, usize)>,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            crop_scale_range: (0.2, 1.0),
            flip_h: 0.5,
            flip_v: 0.5,
            band_jitter: 0.4,
            blur_prob: 0.5,
            blur_sigma_range: (0.1, 2.0),
            output_size: None,
        }
    }
}

impl AugmentPolicy {
    /// Crop covers the full image, nothing else applied.
    pub fn identity() -> Self {
        AugmentPolicy {
            crop_scale_range: (1.0, 1.0),
            flip_h: 0.0,
            flip_v: 0.0,
            band_jitter: 0.0,
            blur_prob: 0.0,
            blur_sigma_range: (0.0, 0.0),
            output_size: None,
        }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let (lo, hi) = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(AugmentError::InvalidPolicy(format!(
                "crop_scale_range ({lo}, {hi}) must satisfy 0 < lo <= hi <= 1"
            )));
        }
        for (name, p) in [("flip_h", self.flip_h), ("flip_v", self.flip_v), ("blur_prob", self.blur_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(AugmentError::InvalidPolicy(format!("{name}={p} is not a probability")));
            }
        }
        if !(self.band_jitter >= 0.0) {
            return Err(AugmentError::InvalidPolicy("band_jitter must be >= 0".into()));
        }
        let (slo, shi) = self.blur_sigma_range;
        if !(slo >= 0.0 && slo <= shi) {
            return Err(AugmentError::InvalidPolicy("blur_sigma_range must satisfy 0 <= lo <= hi".into()));
        }
        if let Some((h, w)) = self.output_size {
            if h == 0 || w == 0 {
                return Err(AugmentError::DegenerateCrop("output size has a zero side".into()));
            }
        }
        Ok(())
    }
}

/// 2N views with view `2i` and `2i + 1` drawn from sample `i` (0-based).
#[derive(Debug, Clone)]
pub struct ViewBatch {
    pub views: Array4<f32>,
    pub pair_of: Vec<usize>,
    pub source_ids: Vec<String>,
}

impl ViewBatch {
    pub fn len(&self) -> usize {
        self.pair_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pair_of.is_empty()
    }

    /// Sample id behind view `i`.
    pub fn source_of(&self, i: usize) -> &str {
        &self.source_ids[i / 2]
    }
}

fn crop_window(h: usize, w: usize, policy: &AugmentPolicy, rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize) {
    let (lo, hi) = policy.crop_scale_range;
    if lo >= 1.0 {
        return (0, 0, h, w);
    }
    let area = (h * w) as f32;
    let (log_lo, log_hi) = ((3.0f32 / 4.0).ln(), (4.0f32 / 3.0).ln());
    for _ in 0..10 {
        let target = area * rng.random_range(lo..=hi);
        let ratio = rng.random_range(log_lo..log_hi).exp();
        let cw = (target * ratio).sqrt().round() as usize;
        let ch = (target / ratio).sqrt().round() as usize;
        if cw >= 1 && ch >= 1 && cw <= w && ch <= h {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            return (top, left, ch, cw);
        }
    }
    (0, 0, h, w)
}

fn one_view(img: &Array3<f32>, policy: &AugmentPolicy, out: (usize, usize), rng: &mut ChaCha8Rng) -> Array3<f32> {
    let (_, h, w) = img.dim();
    let (top, left, ch, cw) = crop_window(h, w, policy, rng);
    let crop = img.slice(s![.., top..top + ch, left..left + cw]);
    let mut view = resize_bilinear(crop, out.0, out.1);
    if rng.random::<f32>() < policy.flip_h {
        view.invert_axis(Axis(2));
        view = view.as_standard_layout().into_owned();
    }
    if rng.random::<f32>() < policy.flip_v {
        view.invert_axis(Axis(1));
        view = view.as_standard_layout().into_owned();
    }
    if policy.band_jitter > 0.0 {
        let d = policy.band_jitter;
        for mut band in view.outer_iter_mut() {
            let gain: f32 = rng.random_range(1.0 - d..=1.0 + d);
            band.mapv_inplace(|v| v * gain);
        }
    }
    if rng.random::<f32>() < policy.blur_prob {
        let (slo, shi) = policy.blur_sigma_range;
        let sigma = if shi > slo { rng.random_range(slo..=shi) } else { slo };
        view = gaussian_blur(&view, sigma);
    }
    view
}

/// Two independent draws of `policy` on the same sample, deterministic in `(seed, sample.id)`.
pub fn make_views(
    sample: &RasterSample,
    policy: &AugmentPolicy,
    seed: u64,
) -> Result<(Array3<f32>, Array3<f32>), AugmentError> {
    policy.validate()?;
    let (_, h, w) = sample.shape();
    if (h * w) as f32 * policy.crop_scale_range.0 < 1.0 {
        return Err(AugmentError::DegenerateCrop(format!(
            "a {:.3} area crop of {h}x{w} is smaller than one pixel",
            policy.crop_scale_range.0
        )));
    }
    let out = policy.output_size.unwrap_or((h, w));
    let mut rng = rng::rng_str(seed, &sample.id);
    let a = one_view(&sample.pixels, policy, out, &mut rng);
    let b = one_view(&sample.pixels, policy, out, &mut rng);
    Ok((a, b))
}

/// Augments N samples into 2N views with a perfect positive-pair matching.
pub fn batch_views(samples: &[RasterSample], policy: &AugmentPolicy, seed: u64) -> Result<ViewBatch, AugmentError> {
    let first = samples.first().ok_or(AugmentError::EmptyBatch)?;
    let (c, h, w) = first.shape();
    let (oh, ow) = policy.output_size.unwrap_or((h, w));
    let mut views = Array4::<f32>::zeros((2 * samples.len(), c, oh, ow));
    for (i, sample) in samples.iter().enumerate() {
        let (sc, sh, sw) = sample.shape();
        if sc != c || (policy.output_size.is_none() && (sh, sw) != (h, w)) {
            return Err(AugmentError::ShapeMismatch(format!(
                "sample {} is {sc}x{sh}x{sw}, batch expects {c} bands at {oh}x{ow}",
                sample.id
            )));
        }
        let (a, b) = make_views(sample, policy, seed)?;
        views.index_axis_mut(Axis(0), 2 * i).assign(&a);
        views.index_axis_mut(Axis(0), 2 * i + 1).assign(&b);
    }
    Ok(ViewBatch {
        views,
        pair_of: (0..2 * samples.len()).map(|i| i ^ 1).collect(),
        source_ids: samples.iter().map(|s| s.id.clone()).collect(),
    })
}
