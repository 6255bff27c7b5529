//! Phase-2 few-shot transfer: frozen-encoder linear probe, full fine-tuning and a
//! from-scratch baseline.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DatasetError, DatasetManifest, RasterSample, SplitTag};
use crate::models::{
    build_encoder, save_checkpoint, Adam, AdamConfig, CheckpointMeta, EncoderConfig, HeadConfig, HeadKind, Model,
    ModelError, Mode, Module, TrainingState,
};
use crate::pretrain::{epoch_batches, scheduled_lr, stack_samples, EpochRecord, TrainError};
use crate::rng;

#[derive(Debug, Error)]
pub enum TransferError {
    #[error("finetune split is not {expected}-shot: class {class} has {found} samples")]
    NotFewShot { class: usize, expected: usize, found: usize },
    #[error("finetune sample {0:?} is unlabeled")]
    Unlabeled(String),
    #[error("finetune sample {0:?} is also in the test split")]
    TestLeak(String),
    #[error("classifier head has {head} classes, manifest has {manifest}")]
    ClassMismatch { head: usize, manifest: usize },
    #[error("mode {0:?} needs a pretrained checkpoint")]
    MissingCheckpoint(TransferMode),
    #[error("invalid transfer config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferMode {
    /// Frozen encoder, train the classifier only.
    #[default]
    Linear,
    /// Train encoder and classifier together.
    Full,
    /// Fresh random encoder trained end-to-end; any checkpoint is ignored.
    Scratch,
}

impl std::str::FromStr for TransferMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(TransferMode::Linear),
            "full" => Ok(TransferMode::Full),
            "scratch" => Ok(TransferMode::Scratch),
            _ => Err(format!("unknown mode {s:?} (expected linear, full or scratch)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransferConfig {
    pub mode: TransferMode,
    pub shots: usize,
    pub epochs: usize,
    /// Defaults to `min(64, shots × classes)`.
    pub batch_size: Option<usize>,
    pub base_lr: f64,
    pub seed: u64,
    /// Keep the projection head and classify its output.
    pub keep_projection: bool,
    /// Encoder for scratch mode; defaults to [`EncoderConfig::small`].
    pub encoder: Option<EncoderConfig>,
    pub weight_decay: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            mode: TransferMode::Linear,
            shots: 5,
            epochs: 100,
            batch_size: None,
            base_lr: 1e-4,
            seed: 0,
            keep_projection: false,
            encoder: None,
            weight_decay: 0.0,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<(), TransferError> {
        let bad = |m: &str| Err(TransferError::InvalidConfig(m.to_string()));
        if self.shots == 0 {
            return bad("shots must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == Some(0) {
            return bad("batch_size must be at least 1");
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad("base_lr must be positive");
        }
        Ok(())
    }
}

/// A trained classifier and its training curve.
pub struct FineTuned {
    pub model: Model,
    pub meta: CheckpointMeta,
    /// Mean cross-entropy per epoch.
    pub history: Vec<EpochRecord>,
}

/// Checks that the finetune split holds exactly `k` labeled samples per class, none of them
/// in the test split, and returns `(id, label)` pairs.
pub fn check_few_shot(dataset: &DatasetManifest, k: usize) -> Result<Vec<(String, usize)>, TransferError> {
    let test: HashSet<&String> = dataset.ids(SplitTag::Test).iter().collect();
    let mut counts = BTreeMap::new();
    let mut out = Vec::new();
    for id in dataset.ids(SplitTag::Finetune) {
        if test.contains(id) {
            return Err(TransferError::TestLeak(id.clone()));
        }
        let label = dataset.label_of(id).ok_or_else(|| TransferError::Unlabeled(id.clone()))?;
        *counts.entry(label).or_insert(0usize) += 1;
        out.push((id.clone(), label));
    }
    for class in 0..dataset.num_classes() {
        let found = counts.get(&class).copied().unwrap_or(0);
        if found != k {
            return Err(TransferError::NotFewShot {
                class,
                expected: k,
                found,
            });
        }
    }
    Ok(out)
}

/// Mean softmax cross-entropy and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Array2<f32>, labels: &[usize]) -> (f64, Array2<f32>) {
    let n = labels.len() as f64;
    let mut grad = Array2::<f32>::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (row, &y)) in logits.outer_iter().zip(labels).enumerate() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b as f64));
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - row[y] as f64;
        for (k, e) in exps.iter().enumerate() {
            let target = if k == y { 1.0 } else { 0.0 };
            grad[[i, k]] = ((e / z - target) / n) as f32;
        }
    }
    (loss / n, grad)
}

fn prepare_model(
    checkpoint: Option<(Model, CheckpointMeta)>,
    dataset: &DatasetManifest,
    cfg: &TransferConfig,
    bands: usize,
) -> Result<(Model, CheckpointMeta), TransferError> {
    let classes = dataset.num_classes();
    let (mut model, mut meta) = match (cfg.mode, checkpoint) {
        (TransferMode::Scratch, _) => {
            let enc = cfg.encoder.clone().unwrap_or_else(|| EncoderConfig::small(bands));
            let model = build_encoder(&enc, cfg.seed)?;
            let meta = CheckpointMeta::for_model(&model);
            (model, meta)
        }
        (mode, None) => return Err(TransferError::MissingCheckpoint(mode)),
        (_, Some(ck)) => ck,
    };
    if model.config().in_bands != bands {
        return Err(ModelError::BandMismatch {
            expected: model.config().in_bands,
            found: bands,
        }
        .into());
    }
    model.detach(HeadKind::InpaintDecoder);
    model.detach(HeadKind::JigsawPosition);
    if !cfg.keep_projection && model.classifier.is_none() {
        model.detach(HeadKind::Projection);
    }
    match &model.classifier {
        Some(c) if c.out_dim != classes => {
            return Err(TransferError::ClassMismatch {
                head: c.out_dim,
                manifest: classes,
            })
        }
        Some(_) => {}
        None => model.attach(&HeadConfig::classifier(classes), rng::derive_str(cfg.seed, "classifier"))?,
    }
    meta.heads = model.heads().to_vec();
    Ok((model, meta))
}

/// Fine-tunes on the dataset's finetune split.
///
/// In linear mode the embeddings are computed once in eval mode and only the classifier
/// is optimised, so encoder parameters (and batch-norm statistics) stay bit-identical.
pub fn finetune(
    checkpoint: Option<(Model, CheckpointMeta)>,
    dataset: &DatasetManifest,
    cfg: &TransferConfig,
) -> Result<FineTuned, TransferError> {
    cfg.validate()?;
    let pairs = check_few_shot(dataset, cfg.shots)?;
    let ids: Vec<String> = pairs.iter().map(|(id, _)| id.clone()).collect();
    let labels: Vec<usize> = pairs.iter().map(|&(_, l)| l).collect();
    let samples = dataset.read_samples(&ids)?;
    let bands = samples[0].num_bands();
    let (pretext, upstream) = match (&checkpoint, cfg.mode) {
        (Some((_, m)), TransferMode::Linear | TransferMode::Full) => (m.pretext, m.config.clone()),
        _ => (None, serde_json::Value::Null),
    };
    let (mut model, mut meta) = prepare_model(checkpoint, dataset, cfg, bands)?;

    let n = samples.len();
    let batch_size = cfg.batch_size.unwrap_or(64.min(n));
    let steps_per_epoch = epoch_batches(n, batch_size, cfg.seed, 0).len() as u64;
    let total = steps_per_epoch * cfg.epochs as u64;
    let mut opt = Adam::new(AdamConfig {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let frozen = cfg.mode == TransferMode::Linear;
    let features = if frozen {
        let refs: Vec<&RasterSample> = samples.iter().collect();
        Some(model.features(&stack_samples(&refs), Mode::Eval)?)
    } else {
        None
    };

    let start = Instant::now();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let batches = epoch_batches(n, batch_size, cfg.seed, epoch);
        let (mut sum, mut lr) = (0.0, 0.0);
        for batch in &batches {
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            model.zero_grad();
            let loss = match &features {
                Some(f) => {
                    let fb = f.select(ndarray::Axis(0), batch);
                    let clf = model.classifier.as_mut().unwrap();
                    let (loss, g) = cross_entropy(&clf.forward(&fb, Mode::Train), &y);
                    clf.backward(&g);
                    loss
                }
                None => {
                    let refs: Vec<&RasterSample> = batch.iter().map(|&i| &samples[i]).collect();
                    let out = model.encoder.forward(&stack_samples(&refs), Mode::Train);
                    let f = match &mut model.projection {
                        Some(p) => p.forward(&out.embedding, Mode::Train),
                        None => out.embedding,
                    };
                    let clf = model.classifier.as_mut().unwrap();
                    let (loss, g) = cross_entropy(&clf.forward(&f, Mode::Train), &y);
                    let mut d = clf.backward(&g);
                    if let Some(p) = &mut model.projection {
                        d = p.backward(&d);
                    }
                    model.encoder.backward(Some(&d), None);
                    loss
                }
            };
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, step, loss }.into());
            }
            lr = scheduled_lr(step, total, 0, cfg.base_lr)?;
            opt.step(&mut model, lr, &|name| !frozen || name.starts_with("classifier."));
            step += 1;
            sum += loss;
        }
        history.push(EpochRecord {
            epoch,
            mean_loss: sum / batches.len() as f64,
            lr,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    meta.pretext = pretext;
    meta.classes = dataset.classes().to_vec();
    meta.dataset_fingerprint = dataset.fingerprint();
    meta.state = TrainingState {
        epoch: cfg.epochs,
        step,
    };
    meta.config = serde_json::json!({ "transfer": cfg, "dataset": dataset.name(), "upstream": upstream });
    Ok(FineTuned { model, meta, history })
}

impl FineTuned {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<std::path::PathBuf, ModelError> {
        save_checkpoint(&self.model, &self.meta, path)
    }
}

/// Arg-max class per sample, in input order.
pub fn predict(model: &mut Model, samples: &[RasterSample]) -> Result<Vec<usize>, ModelError> {
    if model.classifier.is_none() {
        return Err(ModelError::MissingHead("classifier"));
    }
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(64) {
        let refs: Vec<&RasterSample> = chunk.iter().collect();
        let logits = model.classify(&stack_samples(&refs), Mode::Eval)?;
        for row in logits.outer_iter() {
            let best = row
                .iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            out.push(best.0);
        }
    }
    Ok(out)
}
