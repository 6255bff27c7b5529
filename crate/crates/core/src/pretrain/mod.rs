//! Phase-1 training: the three pretext tasks, Adam with a per-step cosine schedule,
//! JSON-lines progress logging and periodic checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array2, Array3, Array4, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::{batch_views, corrupt_with_fill, make_jigsaw, AugmentError, AugmentPolicy, MaskSpec};
use crate::datasets::{DatasetError, DatasetManifest, RasterSample};
use crate::losses::{
    denominator_indices, inpaint_loss_with_grad, jigsaw_loss_from_logits, nt_xent_batch_with_grad, ContrastiveConfig,
    EmbeddingBatch, JigsawReduction, LossError, Region,
};
use crate::models::{
    build_encoder, save_checkpoint, Adam, AdamConfig, CheckpointMeta, EncoderConfig, HeadConfig, Model, ModelError,
    Mode, Module, Pretext, TrainingState,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("step {step} outside [0, {total}]")]
    StepOutOfRange { step: u64, total: u64 },
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence { epoch: usize, step: u64, loss: f64 },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.into(),
            source,
        }
    }
}

/// `base_lr · ½(1 + cos(π·step/total_steps))`.
pub fn cosine_lr(step: u64, total_steps: u64, base_lr: f64) -> Result<f64, TrainError> {
    if total_steps == 0 || step > total_steps {
        return Err(TrainError::StepOutOfRange {
            step,
            total: total_steps,
        });
    }
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos()))
}

/// Learning rate at `step`: linear warmup over `warmup_steps`, cosine afterwards.
pub(crate) fn scheduled_lr(step: u64, total: u64, warmup_steps: u64, base_lr: f64) -> Result<f64, TrainError> {
    if step < warmup_steps {
        return Ok(base_lr * (step + 1) as f64 / warmup_steps as f64);
    }
    cosine_lr(step, total, base_lr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub task: Pretext,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    /// NT-Xent temperature (instance task).
    pub tau: f64,
    /// Projection head output size (instance task).
    pub projection_dim: usize,
    /// Jigsaw grid (rows, columns).
    pub grid: (usize, usize),
    /// Pixels trimmed from every jigsaw cell edge.
    pub gap: usize,
    pub jigsaw_reduction: JigsawReduction,
    pub mask: MaskSpec,
    pub inpaint_region: Region,
    pub policy: AugmentPolicy,
    pub seed: u64,
    /// Save `epoch_XXXX` checkpoints every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            task: Pretext::Instance,
            epochs: 100,
            batch_size: 64,
            base_lr: 1e-3,
            tau: 0.5,
            projection_dim: 64,
            grid: (3, 3),
            gap: 2,
            jigsaw_reduction: JigsawReduction::Sum,
            mask: MaskSpec::default(),
            inpaint_region: Region::Masked,
            policy: AugmentPolicy::default(),
            seed: 0,
            checkpoint_every: 0,
            warmup_epochs: 0,
            weight_decay: 0.0,
        }
    }
}

impl PretrainConfig {
    pub fn for_task(task: Pretext) -> Self {
        PretrainConfig {
            task,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 || (self.task == Pretext::Instance && self.batch_size < 2) {
            return bad(format!("batch_size {} too small for the {} task", self.batch_size, self.task));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        match self.task {
            Pretext::Instance => {
                ContrastiveConfig::new(self.tau).validate()?;
                self.policy.validate()?;
                if self.projection_dim == 0 {
                    return bad("projection_dim must be at least 1".into());
                }
            }
            Pretext::Jigsaw => {
                if self.grid.0 * self.grid.1 < 2 {
                    return bad(format!("jigsaw grid {:?} has fewer than 2 cells", self.grid));
                }
            }
            Pretext::Inpainting => {}
        }
        if self.warmup_epochs >= self.epochs && self.warmup_epochs > 0 {
            return bad("warmup must be shorter than training".into());
        }
        Ok(())
    }
}

/// One line of the progress log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    /// Learning rate of the last optimizer step of the epoch.
    pub lr: f64,
    pub wall_seconds: f64,
}

/// Result of a pretraining run.
pub struct Pretrained {
    pub model: Model,
    pub meta: CheckpointMeta,
    pub history: Vec<EpochRecord>,
    /// Learning rate used at every optimizer step.
    pub lr_trace: Vec<f64>,
    /// Where the final checkpoint was written, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

/// Per-band mean over a set of samples.
pub(crate) fn band_means(samples: &[RasterSample]) -> Vec<f32> {
    let c = samples[0].num_bands();
    let mut sums = vec![0.0f64; c];
    let mut count = 0usize;
    for s in samples {
        for (b, band) in s.pixels.outer_iter().enumerate() {
            sums[b] += band.iter().map(|&v| v as f64).sum::<f64>();
        }
        count += s.pixels.len_of(Axis(1)) * s.pixels.len_of(Axis(2));
    }
    sums.iter().map(|s| (s / count as f64) as f32).collect()
}

/// Shuffled minibatches of indices; a trailing batch of one sample joins the previous batch.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::rng(seed, &[0x5348_5546, epoch as u64]));
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(|c| c.to_vec()).collect();
    if batches.len() > 1 && batches.last().unwrap().len() < 2 {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

pub(crate) fn to_f64<D: ndarray::Dimension>(a: &ndarray::Array<f32, D>) -> ndarray::Array<f64, D> {
    a.mapv(|v| v as f64)
}

pub(crate) fn to_f32<D: ndarray::Dimension>(a: &ndarray::Array<f64, D>) -> ndarray::Array<f32, D> {
    a.mapv(|v| v as f32)
}

pub(crate) fn stack_samples(samples: &[&RasterSample]) -> Array4<f32> {
    let views: Vec<_> = samples.iter().map(|s| s.pixels.view()).collect();
    crate::models::stack(&views)
}

/// Builds the encoder plus the head the task needs.
pub fn pretext_model(encoder_cfg: &EncoderConfig, cfg: &PretrainConfig) -> Result<Model, TrainError> {
    let mut model = build_encoder(encoder_cfg, cfg.seed)?;
    let head = match cfg.task {
        Pretext::Instance => HeadConfig::projection(cfg.projection_dim),
        Pretext::Inpainting => HeadConfig::inpaint_decoder(encoder_cfg.in_bands),
        Pretext::Jigsaw => HeadConfig::jigsaw(cfg.grid.0 * cfg.grid.1),
    };
    model.attach(&head, cfg.seed)?;
    Ok(model)
}

struct StepContext<'a> {
    cfg: &'a PretrainConfig,
    band_means: &'a [f32],
    aug_seed: u64,
}

/// Forward, loss and backward for one batch; gradients accumulate into the model.
fn instance_step(model: &mut Model, batch: &[&RasterSample], ctx: &StepContext) -> Result<f64, TrainError> {
    let owned: Vec<RasterSample> = batch.iter().map(|s| (*s).clone()).collect();
    let views = batch_views(&owned, &ctx.cfg.policy, ctx.aug_seed)?;
    let out = model.encoder.forward(&views.views, Mode::Train);
    let proj = model.projection.as_mut().expect("instance model has a projection head");
    let z = proj.forward(&out.embedding, Mode::Train);
    if z.iter().any(|v| !v.is_finite()) {
        return Ok(f64::NAN);
    }
    let eb = EmbeddingBatch::new(to_f64(&z))?;
    let n_views = eb.len();
    for i in 0..n_views {
        assert_eq!(denominator_indices(n_views, i).count(), n_views - 1);
        assert_eq!(views.pair_of[i], eb.pair_of(i));
    }
    let (loss, grad) = nt_xent_batch_with_grad(&eb, &ContrastiveConfig::new(ctx.cfg.tau))?;
    let de = proj.backward(&to_f32(&grad));
    model.encoder.backward(Some(&de), None);
    Ok(loss)
}

fn inpainting_step(model: &mut Model, batch: &[&RasterSample], ctx: &StepContext) -> Result<f64, TrainError> {
    let mut corrupted = Vec::with_capacity(batch.len());
    let mut masks = Vec::with_capacity(batch.len());
    for s in batch {
        let (img, mask) = corrupt_with_fill(s, &ctx.cfg.mask, ctx.aug_seed, Some(ctx.band_means))?;
        corrupted.push(img);
        masks.push(mask);
    }
    let views: Vec<_> = corrupted.iter().map(|c| c.view()).collect();
    let x = crate::models::stack(&views);
    let (_, _, h, w) = x.dim();
    let chain = model.encoder.spatial_chain(h, w);
    let out = model.encoder.forward(&x, Mode::Train);
    let decoder = model.decoder.as_mut().expect("inpainting model has a decoder");
    let pred = decoder.forward(&out.features, &chain, Mode::Train);
    let b = batch.len() as f64;
    let mut total = 0.0;
    let mut dpred = Array4::<f32>::zeros(pred.raw_dim());
    for (i, s) in batch.iter().enumerate() {
        let p: Array3<f64> = to_f64(&pred.slice(s![i, .., .., ..]).to_owned());
        let t: Array3<f64> = to_f64(&s.pixels);
        let (l, g) = inpaint_loss_with_grad(p.view(), t.view(), masks[i].view(), ctx.cfg.inpaint_region)?;
        total += l;
        dpred.slice_mut(s![i, .., .., ..]).assign(&to_f32(&(g / b)));
    }
    let df = decoder.backward(&dpred);
    model.encoder.backward(None, Some(df));
    Ok(total / b)
}

fn jigsaw_step(model: &mut Model, batch: &[&RasterSample], ctx: &StepContext) -> Result<f64, TrainError> {
    let mut puzzles = Vec::with_capacity(batch.len());
    for s in batch {
        puzzles.push(make_jigsaw(s, ctx.cfg.grid, ctx.cfg.gap, ctx.aug_seed)?);
    }
    let cells = ctx.cfg.grid.0 * ctx.cfg.grid.1;
    let patches: Vec<_> = puzzles.iter().flat_map(|p| p.patches.outer_iter()).collect();
    let x = crate::models::stack(&patches);
    let out = model.encoder.forward(&x, Mode::Train);
    let head = model.jigsaw.as_mut().expect("jigsaw model has a position head");
    let logits = head.forward(&out.embedding, Mode::Train);
    let b = batch.len() as f64;
    let mut total = 0.0;
    let mut dlogits = Array2::<f32>::zeros(logits.raw_dim());
    for (i, p) in puzzles.iter().enumerate() {
        let rows = s![i * cells..(i + 1) * cells, ..];
        let l64 = to_f64(&logits.slice(rows).to_owned());
        let (l, g) = jigsaw_loss_from_logits(l64.view(), &p.positions, ctx.cfg.jigsaw_reduction)?;
        total += l;
        dlogits.slice_mut(rows).assign(&to_f32(&(g / b)));
    }
    let de = head.backward(&dlogits);
    model.encoder.backward(Some(&de), None);
    Ok(total / b)
}

/// Pretrains on the dataset's pretraining pool. See [`pretrain_with`].
pub fn pretrain(
    dataset: &DatasetManifest,
    encoder_cfg: &EncoderConfig,
    cfg: &PretrainConfig,
    out: Option<&Path>,
) -> Result<Pretrained, TrainError> {
    pretrain_with(dataset, encoder_cfg, cfg, out, &mut |_| {})
}

/// Pretrains and calls `on_epoch` after every epoch.
///
/// With `out`, the final checkpoint is written there, periodic ones to `out/epoch_XXXX`,
/// and the progress log to `out/progress.jsonl`.
pub fn pretrain_with(
    dataset: &DatasetManifest,
    encoder_cfg: &EncoderConfig,
    cfg: &PretrainConfig,
    out: Option<&Path>,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<Pretrained, TrainError> {
    cfg.validate()?;
    encoder_cfg.validate()?;
    let ids = dataset.pretrain_pool();
    if ids.is_empty() {
        return Err(TrainError::EmptySplit("pretrain"));
    }
    let samples = dataset.read_samples(&ids)?;
    let (c, h, w) = samples[0].shape();
    let (eh, ew) = match cfg.task {
        Pretext::Instance => cfg.policy.output_size.unwrap_or((h, w)),
        Pretext::Jigsaw => ((h / cfg.grid.0).saturating_sub(2 * cfg.gap), (w / cfg.grid.1).saturating_sub(2 * cfg.gap)),
        Pretext::Inpainting => (h, w),
    };
    encoder_cfg.check_input(c, eh, ew)?;
    if cfg.task == Pretext::Instance && samples.len() < 2 {
        return Err(TrainError::InvalidConfig("instance discrimination needs at least 2 samples".into()));
    }

    let mut model = pretext_model(encoder_cfg, cfg)?;
    let means = band_means(&samples);
    let mut opt = Adam::new(AdamConfig {
        weight_decay: cfg.weight_decay,
        ..Default::default()
    });
    let steps_per_epoch = epoch_batches(samples.len(), cfg.batch_size, cfg.seed, 0).len() as u64;
    let total = steps_per_epoch * cfg.epochs as u64;
    let warmup = steps_per_epoch * cfg.warmup_epochs as u64;

    let mut log = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
            let p = dir.join("progress.jsonl");
            Some((fs::File::create(&p).map_err(|e| TrainError::io(&p, e))?, p))
        }
        None => None,
    };
    let mut meta = CheckpointMeta::for_model(&model);
    meta.pretext = Some(cfg.task);
    meta.dataset_fingerprint = dataset.fingerprint();
    meta.config = serde_json::json!({ "pretrain": cfg, "encoder": encoder_cfg, "dataset": dataset.name() });

    let start = Instant::now();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut lr_trace = Vec::with_capacity(total as usize);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let ctx = StepContext {
            cfg,
            band_means: &means,
            aug_seed: rng::derive(cfg.seed, &[0x4155_4753, epoch as u64]),
        };
        let mut sum = 0.0;
        let mut lr = 0.0;
        let batches = epoch_batches(samples.len(), cfg.batch_size, cfg.seed, epoch);
        for batch in &batches {
            let refs: Vec<&RasterSample> = batch.iter().map(|&i| &samples[i]).collect();
            model.zero_grad();
            let loss = match cfg.task {
                Pretext::Instance => instance_step(&mut model, &refs, &ctx)?,
                Pretext::Inpainting => inpainting_step(&mut model, &refs, &ctx)?,
                Pretext::Jigsaw => jigsaw_step(&mut model, &refs, &ctx)?,
            };
            if !loss.is_finite() {
                return Err(TrainError::Divergence { epoch, step, loss });
            }
            lr = scheduled_lr(step, total, warmup, cfg.base_lr)?;
            lr_trace.push(lr);
            opt.step(&mut model, lr, &|_| true);
            step += 1;
            sum += loss;
        }
        let rec = EpochRecord {
            epoch,
            mean_loss: sum / batches.len() as f64,
            lr,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        if let Some((f, p)) = &mut log {
            let line = serde_json::to_string(&rec).expect("record serializes");
            writeln!(f, "{line}").map_err(|e| TrainError::io(p.as_path(), e))?;
        }
        on_epoch(&rec);
        history.push(rec);
        meta.state = TrainingState { epoch: epoch + 1, step };
        if let Some(dir) = out {
            let done = epoch + 1;
            if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.epochs {
                save_checkpoint(&model, &meta, dir.join(format!("epoch_{done:04}")))?;
            }
        }
    }
    let checkpoint = match out {
        Some(dir) => Some(save_checkpoint(&model, &meta, dir)?),
        None => None,
    };
    Ok(Pretrained {
        model,
        meta,
        history,
        lr_trace,
        checkpoint,
    })
}
