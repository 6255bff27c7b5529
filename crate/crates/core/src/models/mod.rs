//! Residual CNN encoder with attachable heads and a directory checkpoint format.
//!
//! Parameters are addressed by dotted paths (`encoder.stage1.block0.conv1.weight`,
//! `projection.fc2.bias`, ...). Initialisation of every parameter is seeded from
//! `(seed, path)`, so building the same config twice gives identical weights.

mod checkpoint;
mod layers;
mod net;
mod optim;
mod param;

use std::path::PathBuf;

use ndarray::{Array2, Array4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, TrainingState, FORMAT_VERSION};
pub use layers::{Conv2d, Linear, Mode, NormKind};
pub use net::{Decoder, Encoder, EncoderOut, ProjectionHead};
pub use optim::{Adam, AdamConfig};
pub use param::{Module, Param};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input {h}x{w} collapses below 1 pixel before the last of {stages} stages (need at least {min}x{min})")]
    SpatialCollapse { h: usize, w: usize, stages: usize, min: usize },
    #[error("model expects {expected} bands, input has {found}")]
    BandMismatch { expected: usize, found: usize },
    #[error("non-finite activation in {0}")]
    NonFinite(&'static str),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("incompatible head: {0}")]
    IncompatibleHead(String),
    #[error("missing head: {0}")]
    MissingHead(&'static str),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { expected: u32, found: u32 },
    #[error("checkpoint lacks parameter {0}")]
    MissingParameter(String),
    #[error("checkpoint has parameter {0} that the model does not define")]
    UnexpectedParameter(String),
    #[error("parameter {name}: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),
    #[error("malformed checkpoint file {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub in_bands: usize,
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub embedding_dim: usize,
    pub norm: NormKind,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            in_bands: 3,
            widths: vec![32, 64, 128],
            blocks_per_stage: 1,
            embedding_dim: 128,
            norm: NormKind::Batch,
            activation: Activation::Relu,
        }
    }
}

impl EncoderConfig {
    /// Desk-scale default: 9 convolutions, trains on a CPU in minutes.
    pub fn small(in_bands: usize) -> Self {
        EncoderConfig {
            in_bands,
            ..Default::default()
        }
    }

    /// Narrow variant for quick runs and test suites.
    pub fn tiny(in_bands: usize) -> Self {
        EncoderConfig {
            in_bands,
            widths: vec![8, 16, 32],
            ..Default::default()
        }
    }

    /// Deeper preset (two blocks per stage, four stages) for machines with more compute.
    pub fn large(in_bands: usize) -> Self {
        EncoderConfig {
            in_bands,
            widths: vec![32, 64, 128, 256],
            blocks_per_stage: 2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.in_bands == 0 {
            return bad("in_bands must be at least 1");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be non-empty and positive");
        }
        if self.blocks_per_stage == 0 {
            return bad("blocks_per_stage must be at least 1");
        }
        if self.embedding_dim < 8 {
            return bad("embedding_dim must be at least 8");
        }
        Ok(())
    }

    /// Number of 2x downsamplings between input and the pre-pooling feature map.
    pub fn downsamplings(&self) -> usize {
        self.widths.len() + 1
    }

    /// Smallest input side the encoder accepts.
    pub fn min_side(&self) -> usize {
        1 << self.downsamplings()
    }

    pub fn check_input(&self, c: usize, h: usize, w: usize) -> Result<(), ModelError> {
        if c != self.in_bands {
            return Err(ModelError::BandMismatch {
                expected: self.in_bands,
                found: c,
            });
        }
        let min = self.min_side();
        if h < min || w < min {
            return Err(ModelError::SpatialCollapse {
                h,
                w,
                stages: self.widths.len(),
                min,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeadKind {
    Projection,
    InpaintDecoder,
    JigsawPosition,
    LinearClassifier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kind: HeadKind,
    pub out_dim: usize,
}

impl HeadConfig {
    pub fn projection(d_p: usize) -> Self {
        HeadConfig {
            kind: HeadKind::Projection,
            out_dim: d_p,
        }
    }

    pub fn inpaint_decoder(bands: usize) -> Self {
        HeadConfig {
            kind: HeadKind::InpaintDecoder,
            out_dim: bands,
        }
    }

    pub fn jigsaw(cells: usize) -> Self {
        HeadConfig {
            kind: HeadKind::JigsawPosition,
            out_dim: cells,
        }
    }

    pub fn classifier(num_classes: usize) -> Self {
        HeadConfig {
            kind: HeadKind::LinearClassifier,
            out_dim: num_classes,
        }
    }

    /// Parameter-path prefix owned by this head.
    pub fn prefix(&self) -> &'static str {
        match self.kind {
            HeadKind::Projection => "projection",
            HeadKind::InpaintDecoder => "decoder",
            HeadKind::JigsawPosition => "jigsaw",
            HeadKind::LinearClassifier => "classifier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pretext {
    Inpainting,
    Jigsaw,
    Instance,
}

impl Pretext {
    pub const ALL: [Pretext; 3] = [Pretext::Inpainting, Pretext::Jigsaw, Pretext::Instance];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pretext::Inpainting => "inpainting",
            Pretext::Jigsaw => "jigsaw",
            Pretext::Instance => "instance",
        }
    }
}

impl std::fmt::Display for Pretext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Pretext {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Pretext::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown pretext {s:?} (expected inpainting, jigsaw or instance)"))
    }
}

/// An encoder plus whichever heads are attached.
///
/// When both a projection head and a classifier are present, the classifier reads the
/// projection output instead of the raw embedding.
pub struct Model {
    pub encoder: Encoder,
    pub projection: Option<ProjectionHead>,
    pub decoder: Option<Decoder>,
    pub jigsaw: Option<Linear>,
    pub classifier: Option<Linear>,
    heads: Vec<HeadConfig>,
    seed: u64,
}

pub fn build_encoder(cfg: &EncoderConfig, seed: u64) -> Result<Model, ModelError> {
    cfg.validate()?;
    Ok(Model {
        encoder: Encoder::new(cfg, seed),
        projection: None,
        decoder: None,
        jigsaw: None,
        classifier: None,
        heads: Vec::new(),
        seed,
    })
}

pub fn attach_head(mut model: Model, head: &HeadConfig, seed: u64) -> Result<Model, ModelError> {
    model.attach(head, seed)?;
    Ok(model)
}

impl Model {
    pub fn config(&self) -> &EncoderConfig {
        self.encoder.config()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn heads(&self) -> &[HeadConfig] {
        &self.heads
    }

    pub fn has_head(&self, kind: HeadKind) -> bool {
        self.heads.iter().any(|h| h.kind == kind)
    }

    pub fn attach(&mut self, head: &HeadConfig, seed: u64) -> Result<(), ModelError> {
        let cfg = self.config().clone();
        let d_e = cfg.embedding_dim;
        if head.out_dim == 0 {
            return Err(ModelError::IncompatibleHead("out_dim must be at least 1".into()));
        }
        if self.has_head(head.kind) {
            return Err(ModelError::IncompatibleHead(format!("{} head already attached", head.prefix())));
        }
        match head.kind {
            HeadKind::Projection => {
                if self.classifier.is_some() {
                    return Err(ModelError::IncompatibleHead(
                        "attach the projection head before the classifier".into(),
                    ));
                }
                self.projection = Some(ProjectionHead::new(d_e, head.out_dim, seed));
            }
            HeadKind::InpaintDecoder => {
                if head.out_dim != cfg.in_bands {
                    return Err(ModelError::IncompatibleHead(format!(
                        "decoder must output {} bands, not {}",
                        cfg.in_bands, head.out_dim
                    )));
                }
                self.decoder = Some(Decoder::new(&cfg, seed));
            }
            HeadKind::JigsawPosition => {
                if head.out_dim < 2 {
                    return Err(ModelError::IncompatibleHead("jigsaw head needs at least 2 positions".into()));
                }
                self.jigsaw = Some(Linear::new("jigsaw", d_e, head.out_dim, seed));
            }
            HeadKind::LinearClassifier => {
                let input = self.projection.as_ref().map_or(d_e, |p| p.out_dim());
                self.classifier = Some(Linear::new("classifier", input, head.out_dim, seed));
            }
        }
        self.heads.push(head.clone());
        Ok(())
    }

    /// Drops every head, keeping the encoder.
    pub fn strip_heads(&mut self) {
        self.projection = None;
        self.decoder = None;
        self.jigsaw = None;
        self.classifier = None;
        self.heads.clear();
    }

    pub fn detach(&mut self, kind: HeadKind) {
        match kind {
            HeadKind::Projection => self.projection = None,
            HeadKind::InpaintDecoder => self.decoder = None,
            HeadKind::JigsawPosition => self.jigsaw = None,
            HeadKind::LinearClassifier => self.classifier = None,
        }
        self.heads.retain(|h| h.kind != kind);
    }

    fn check_batch(&self, x: &Array4<f32>) -> Result<(), ModelError> {
        let (_, c, h, w) = x.dim();
        self.config().check_input(c, h, w)
    }

    /// Embeddings for a batch. Eval mode is a pure function of the parameters.
    pub fn encode(&mut self, x: &Array4<f32>, mode: Mode) -> Result<Array2<f32>, ModelError> {
        self.check_batch(x)?;
        let x = x.as_standard_layout().into_owned();
        let out = self.encoder.forward(&x, mode).embedding;
        finite(out, "encoder")
    }

    /// Input to the classifier: the embedding, or its projection when the head was kept.
    pub fn features(&mut self, x: &Array4<f32>, mode: Mode) -> Result<Array2<f32>, ModelError> {
        let e = self.encode(x, mode)?;
        match &mut self.projection {
            Some(p) => finite(p.forward(&e, mode), "projection"),
            None => Ok(e),
        }
    }

    /// Class logits for a batch.
    pub fn classify(&mut self, x: &Array4<f32>, mode: Mode) -> Result<Array2<f32>, ModelError> {
        if self.classifier.is_none() {
            return Err(ModelError::MissingHead("classifier"));
        }
        let f = self.features(x, mode)?;
        let logits = self.classifier.as_mut().unwrap().forward(&f, mode);
        finite(logits, "classifier")
    }

    /// All parameters keyed by dotted path, in visiting order.
    pub fn named_params(&self) -> Vec<(String, Param)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, p| out.push((n.to_string(), p.clone())));
        out
    }
}

fn finite<D: ndarray::Dimension>(a: ndarray::Array<f32, D>, what: &'static str) -> Result<ndarray::Array<f32, D>, ModelError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(a)
    } else {
        Err(ModelError::NonFinite(what))
    }
}

impl Module for Model {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param)) {
        self.encoder.visit(&param::join(prefix, "encoder"), f);
        if let Some(h) = &self.projection {
            h.visit(&param::join(prefix, "projection"), f);
        }
        if let Some(h) = &self.decoder {
            h.visit(&param::join(prefix, "decoder"), f);
        }
        if let Some(h) = &self.jigsaw {
            h.visit(&param::join(prefix, "jigsaw"), f);
        }
        if let Some(h) = &self.classifier {
            h.visit(&param::join(prefix, "classifier"), f);
        }
    }
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        self.encoder.visit_mut(&param::join(prefix, "encoder"), f);
        if let Some(h) = &mut self.projection {
            h.visit_mut(&param::join(prefix, "projection"), f);
        }
        if let Some(h) = &mut self.decoder {
            h.visit_mut(&param::join(prefix, "decoder"), f);
        }
        if let Some(h) = &mut self.jigsaw {
            h.visit_mut(&param::join(prefix, "jigsaw"), f);
        }
        if let Some(h) = &mut self.classifier {
            h.visit_mut(&param::join(prefix, "classifier"), f);
        }
    }
}

/// Stacks CHW samples into an NCHW batch.
pub fn stack(images: &[ndarray::ArrayView3<f32>]) -> Array4<f32> {
    let (c, h, w) = images[0].dim();
    let mut out = Array4::<f32>::zeros((images.len(), c, h, w));
    for (mut dst, src) in out.outer_iter_mut().zip(images) {
        dst.assign(src);
    }
    out
}
