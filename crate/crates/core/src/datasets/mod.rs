//! Dataset ingestion, manifests, deterministic splits and synthetic scenes.

mod manifest;
mod raster;
mod sampling;
mod synth;

use std::path::PathBuf;

use ndarray::Array3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use manifest::{load_manifest, DatasetManifest, ManifestEntry, SplitTag, Splits};
pub use raster::{decode_raster, encode_raster, read_raster, write_raster, RASTER_MAGIC};
pub use sampling::{ensure_split, few_shot_sample, mix, round_half_away, split, subsample_fraction, SplitSpec};
pub use synth::{render_scene, synth_generate, SynthSpec};

/// Smallest spatial extent accepted for a sample.
pub const MIN_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),
    #[error("sample {id:?} has label {label} but the manifest declares {num_classes} classes")]
    LabelOutOfRange {
        id: String,
        label: usize,
        num_classes: usize,
    },
    #[error("unknown sample id {0:?}")]
    UnknownId(String),
    #[error("cannot decode {path}: {reason}")]
    DecodeFailure { path: PathBuf, reason: String },
    #[error("sample {id:?} has {found} bands, manifest declares {expected}")]
    BandMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("sample {id:?} appears in more than one split")]
    SplitOverlap { id: String },
    #[error("stratified split requested but sample {0:?} is unlabeled")]
    UnlabeledStratified(String),
    #[error("class {class} has {available} eligible samples, {requested} requested")]
    InsufficientSamples {
        class: usize,
        available: usize,
        requested: usize,
    },
    #[error("fraction {0} outside (0, 1]")]
    FractionOutOfRange(f64),
    #[error("source {0:?} listed more than once")]
    DuplicateSource(String),
    #[error("cannot mix datasets with {first} and {other} bands")]
    MixBandMismatch { first: usize, other: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DatasetError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Spectral band descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandInfo {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelength_nm: Option<f32>,
}

impl BandInfo {
    pub fn named(name: impl Into<String>) -> Self {
        BandInfo {
            name: name.into(),
            wavelength_nm: None,
        }
    }

    /// Generic descriptors `b0`, `b1`, ... for `count` bands.
    pub fn generic(count: usize) -> Vec<BandInfo> {
        (0..count).map(|i| BandInfo::named(format!("b{i}"))).collect()
    }
}

/// One decoded C×H×W image.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterSample {
    pub id: String,
    pub pixels: Array3<f32>,
    pub bands: Vec<BandInfo>,
    pub label: Option<usize>,
    pub class_name: Option<String>,
}

impl RasterSample {
    pub fn new(id: impl Into<String>, pixels: Array3<f32>) -> Self {
        let bands = BandInfo::generic(pixels.dim().0);
        RasterSample {
            id: id.into(),
            pixels,
            bands,
            label: None,
            class_name: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }

    /// (C, H, W)
    pub fn shape(&self) -> (usize, usize, usize) {
        self.pixels.dim()
    }

    pub fn num_bands(&self) -> usize {
        self.pixels.dim().0
    }
}
