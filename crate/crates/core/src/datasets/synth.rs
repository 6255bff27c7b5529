//! Procedural multi-band scenes for desk-scale experiments.
//!
//! Each class is a spatial pattern family (stripes, checkerboards, blobs, ...). Samples
//! vary in orientation, scale, phase, per-band gain, brightness and additive noise, so
//! class identity lives in spatial structure rather than in raw band levels. Part of each
//! scene is covered by a distractor texture, the way real scenes mix land cover types.

use std::f32::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_raster, BandInfo, DatasetError, DatasetManifest, ManifestEntry, MIN_SIDE};
use crate::rng;

const PATTERNS: [&str; 10] = [
    "stripes", "checker", "blobs", "gradient", "noise", "rings", "dots", "crosshatch", "spokes",
    "zigzag",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub bands: usize,
    pub size: usize,
    pub per_class: usize,
    pub seed: u64,
    /// Generator family. Family 0 starts at stripes, family 1 at rings with a finer
    /// scale, so two families make two related but distinct domains.
    #[serde(default)]
    pub family: u32,
    #[serde(default = "default_name")]
    pub name: String,
    /// Largest fraction of a scene covered by a distractor texture. Each scene draws its
    /// covered fraction from `[clutter / 2, clutter]`.
    #[serde(default = "default_clutter")]
    pub clutter: f32,
}

fn default_clutter() -> f32 {
    0.5
}

fn default_name() -> String {
    "synth".into()
}

impl SynthSpec {
    pub fn new(classes: usize, bands: usize, size: usize, per_class: usize, seed: u64) -> Self {
        SynthSpec {
            classes,
            bands,
            size,
            per_class,
            seed,
            family: 0,
            name: default_name(),
            clutter: default_clutter(),
        }
    }

    fn validate(&self) -> Result<(), DatasetError> {
        if self.classes < 2 {
            return Err(DatasetError::Invalid("synthetic data needs at least 2 classes".into()));
        }
        if self.bands < 1 {
            return Err(DatasetError::Invalid("synthetic data needs at least 1 band".into()));
        }
        if !(0.0..1.0).contains(&self.clutter) {
            return Err(DatasetError::Invalid("clutter must lie in [0, 1)".into()));
        }
        if self.size < MIN_SIDE {
            return Err(DatasetError::Invalid(format!("size must be at least {MIN_SIDE}")));
        }
        Ok(())
    }

    fn pattern(&self, class: usize) -> usize {
        (class + 5 * self.family as usize) % PATTERNS.len()
    }

    fn scale(&self) -> f32 {
        if self.family.is_multiple_of(2) {
            1.0
        } else {
            0.7
        }
    }

    pub fn class_names(&self) -> Vec<String> {
        (0..self.classes)
            .map(|c| {
                let base = PATTERNS[self.pattern(c)];
                match c / PATTERNS.len() {
                    0 => base.to_string(),
                    k => format!("{base}_{k}"),
                }
            })
            .collect()
    }
}

/// Writes `per_class` scenes per class under `out/samples/` plus `out/manifest.json`.
///
/// The returned manifest has no split tags.
pub fn synth_generate(spec: &SynthSpec, out: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    spec.validate()?;
    let out = out.as_ref();
    let samples_dir = out.join("samples");
    fs::create_dir_all(&samples_dir).map_err(|e| DatasetError::io(&samples_dir, e))?;
    let profiles: Vec<Vec<f32>> = (0..spec.classes).map(|c| class_profile(spec, c)).collect();
    let mut entries = Vec::with_capacity(spec.classes * spec.per_class);
    for class in 0..spec.classes {
        for j in 0..spec.per_class {
            let index = class * spec.per_class + j;
            let id = format!("s_{index:05}");
            let mut rng = rng::rng(spec.seed, &[spec.family as u64, class as u64, j as u64]);
            let pixels = render_scene(spec, class, &profiles[class], &mut rng);
            let rel = PathBuf::from("samples").join(format!("{id}.sslr"));
            write_raster(&out.join(&rel), &pixels)?;
            entries.push(ManifestEntry {
                id,
                path: rel,
                label: Some(class),
            });
        }
    }
    let mut manifest = DatasetManifest::new(
        spec.name.clone(),
        out,
        spec.class_names(),
        BandInfo::generic(spec.bands),
        entries,
    )?;
    manifest.set_root(out.to_path_buf());
    manifest.save(out.join("manifest.json"))?;
    Ok(manifest)
}

/// Mean band levels of a class: a shared dataset profile plus a small class offset.
fn class_profile(spec: &SynthSpec, class: usize) -> Vec<f32> {
    let mut shared = rng::rng_str(spec.seed, &format!("profile/{}", spec.family));
    let base: Vec<f32> = (0..spec.bands).map(|_| shared.random_range(0.3..0.6)).collect();
    let mut own = rng::rng_str(spec.seed, &format!("profile/{}/{class}", spec.family));
    base.iter().map(|b| b + own.random_range(-0.01..0.01)).collect()
}

/// Renders one C×H×W scene of `class`.
pub fn render_scene(spec: &SynthSpec, class: usize, profile: &[f32], rng: &mut ChaCha8Rng) -> Array3<f32> {
    let s = spec.size;
    let own = spec.pattern(class);
    let mut field = structure(own, s, spec.scale(), rng);
    if spec.clutter > 0.0 {
        let covered = rng.random_range(spec.clutter / 2.0..=spec.clutter);
        let other = (own + rng.random_range(1..PATTERNS.len())) % PATTERNS.len();
        let distractor = structure(other, s, rng.random_range(0.7..1.3), rng);
        let mask = region_mask(s, covered, rng);
        field.zip_mut_with(&mask, |f, &m| *f *= 1.0 - m);
        field.scaled_add(1.0, &(&mask * &distractor));
    }
    let contrast: f32 = rng.random_range(0.25..0.45);
    let brightness: f32 = rng.random_range(-0.1..0.1);
    let noise = Normal::new(0.0f32, 0.04).unwrap();
    let mut out = Array3::<f32>::zeros((spec.bands, s, s));
    for b in 0..spec.bands {
        let gain: f32 = rng.random_range(0.6..1.4);
        let level = profile[b] + brightness + rng.random_range(-0.05..0.05);
        for y in 0..s {
            for x in 0..s {
                out[[b, y, x]] =
                    level + gain * contrast * (field[[y, x]] - 0.5) + noise.sample(rng);
            }
        }
    }
    out
}

/// Soft mask that is 1 on roughly `covered` of the image, bounded by a random straight edge.
fn region_mask(s: usize, covered: f32, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let phi: f32 = rng.random_range(0.0..2.0 * PI);
    let (c, d) = (phi.cos(), phi.sin());
    let dist = Array2::from_shape_fn((s, s), |(y, x)| x as f32 * c + y as f32 * d);
    let mut sorted: Vec<f32> = dist.iter().copied().collect();
    sorted.sort_by(f32::total_cmp);
    let cut = sorted[((1.0 - covered) * (sorted.len() - 1) as f32) as usize];
    dist.mapv(|v| 1.0 / (1.0 + (-(v - cut) / 1.5).exp()))
}

fn structure(pattern: usize, s: usize, scale: f32, rng: &mut ChaCha8Rng) -> Array2<f32> {
    let sf = s as f32;
    let theta: f32 = rng.random_range(0.0..PI);
    let phase: f32 = rng.random_range(0.0..2.0 * PI);
    let (ct, st) = (theta.cos(), theta.sin());
    let period = scale * sf * rng.random_range(0.12..0.25);
    let cx = sf * rng.random_range(0.3..0.7);
    let cy = sf * rng.random_range(0.3..0.7);
    let mut f = Array2::<f32>::zeros((s, s));
    match pattern {
        // stripes
        0 => f.indexed_iter_mut().for_each(|((y, x), v)| {
            let u = x as f32 * ct + y as f32 * st;
            *v = 0.5 + 0.5 * (2.0 * PI * u / period + phase).sin();
        }),
        // checkerboard with soft edges
        1 => f.indexed_iter_mut().for_each(|((y, x), v)| {
            let (xf, yf) = (x as f32, y as f32);
            let u = xf * ct + yf * st;
            let w = -xf * st + yf * ct;
            let c = (PI * u / period + phase).sin() * (PI * w / period).sin();
            *v = 0.5 + 0.5 * (4.0 * c).tanh();
        }),
        // gaussian blob field
        2 => {
            let count = rng.random_range(6..=12);
            let blobs: Vec<(f32, f32, f32)> = (0..count)
                .map(|_| {
                    (
                        rng.random_range(0.0..sf),
                        rng.random_range(0.0..sf),
                        scale * sf * rng.random_range(0.06..0.12),
                    )
                })
                .collect();
            f.indexed_iter_mut().for_each(|((y, x), v)| {
                let sum: f32 = blobs
                    .iter()
                    .map(|&(bx, by, r)| {
                        let d2 = (x as f32 - bx).powi(2) + (y as f32 - by).powi(2);
                        (-d2 / (2.0 * r * r)).exp()
                    })
                    .sum();
                *v = sum.min(1.0);
            });
        }
        // smooth ramp with a gentle long wave
        3 => f.indexed_iter_mut().for_each(|((y, x), v)| {
            let u = (x as f32 - sf / 2.0) * ct + (y as f32 - sf / 2.0) * st;
            let t = u / (sf / std::f32::consts::SQRT_2);
            *v = (0.5 + 0.5 * t + 0.1 * (2.0 * PI * u / sf + phase).sin()).clamp(0.0, 1.0);
        }),
        // box-filtered white noise
        4 => {
            let raw = Array2::from_shape_fn((s, s), |_| rng.random_range(0.0f32..1.0));
            f.indexed_iter_mut().for_each(|((y, x), v)| {
                let mut acc = 0.0;
                let mut n = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (yy, xx) = (y as i64 + dy, x as i64 + dx);
                        if yy >= 0 && xx >= 0 && (yy as usize) < s && (xx as usize) < s {
                            acc += raw[[yy as usize, xx as usize]];
                            n += 1.0;
                        }
                    }
                }
                *v = (0.5 + 3.0 * (acc / n - 0.5)).clamp(0.0, 1.0);
            });
        }
        // concentric rings
        5 => f.indexed_iter_mut().for_each(|((y, x), v)| {
            let r = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt();
            *v = 0.5 + 0.5 * (2.0 * PI * r / period + phase).sin();
        }),
        // rotated dot lattice
        6 => f.indexed_iter_mut().for_each(|((y, x), v)| {
            let (xf, yf) = (x as f32, y as f32);
            let u = (xf * ct + yf * st) / period + phase;
            let w = (-xf * st + yf * ct) / period;
            let du = u - u.round();
            let dw = w - w.round();
            *v = (-(du * du + dw * dw) / (2.0 * 0.18 * 0.18)).exp();
        }),
        // crosshatch
        7 => f.indexed_iter_mut().for_each(|((y, x), v)| {
            let (xf, yf) = (x as f32, y as f32);
            let a = (2.0 * PI * (xf * ct + yf * st) / period + phase).sin();
            let b = (2.0 * PI * (-xf * st + yf * ct) / period).sin();
            *v = 0.5 + 0.5 * a.max(b);
        }),
        // radial spokes
        8 => {
            let n = rng.random_range(4..=8) as f32;
            f.indexed_iter_mut().for_each(|((y, x), v)| {
                let a = (y as f32 - cy).atan2(x as f32 - cx);
                *v = 0.5 + 0.5 * (n * a + phase).sin();
            });
        }
        // wavy stripes
        _ => {
            let amp = period * rng.random_range(0.3..0.6);
            let wave = period * rng.random_range(1.5..3.0);
            f.indexed_iter_mut().for_each(|((y, x), v)| {
                let (xf, yf) = (x as f32, y as f32);
                let u = xf * ct + yf * st;
                let w = -xf * st + yf * ct;
                let t = u + amp * (2.0 * PI * w / wave).sin();
                *v = 0.5 + 0.5 * (2.0 * PI * t / period + phase).sin();
            });
        }
    }
    f
}
