//! `sslscene`: generate data, pretrain, fine-tune, evaluate and run factor sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use sslscene::datasets::{
    ensure_split, few_shot_sample, load_manifest, split, synth_generate, DatasetManifest, SplitSpec, SynthSpec,
};
use sslscene::eval::{
    append_record, read_records, run_experiment_with, test_accuracy, write_summary, ExperimentConfig, ResultRecord,
};
use sslscene::models::{load_checkpoint, EncoderConfig};
use sslscene::pretrain::{pretrain_with, PretrainConfig};
use sslscene::transfer::{finetune, TransferConfig};

#[derive(Parser)]
#[command(name = "sslscene", version, about = "Self-supervised pretraining and few-shot transfer for scene imagery")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-band scene dataset with a stored test split.
    DataSynth(SynthArgs),
    /// Pretrain an encoder with a pretext task.
    Pretrain(PretrainArgs),
    /// Train a classifier on a few-shot draw of a dataset.
    Finetune(FinetuneArgs),
    /// Report overall accuracy of a classifier on a dataset's test split.
    Eval(EvalArgs),
    /// Run a factor-study sweep from an experiment config.
    Experiment(ExperimentArgs),
    /// Print a checkpoint's metadata.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file with any of the fields below; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of classes.
    #[arg(long)]
    classes: Option<usize>,
    /// Number of spectral bands.
    #[arg(long)]
    bands: Option<usize>,
    /// Image side length in pixels.
    #[arg(long)]
    size: Option<usize>,
    /// Samples per class.
    #[arg(long)]
    per_class: Option<usize>,
    /// Seed for rendering and for the test split.
    #[arg(long)]
    seed: Option<u64>,
    /// Generator family; different families make different domains.
    #[arg(long)]
    family: Option<u32>,
    /// Largest fraction of a scene covered by a distractor texture.
    #[arg(long)]
    clutter: Option<f32>,
    /// Dataset name recorded in the manifest.
    #[arg(long)]
    name: Option<String>,
    /// Fraction of each class held out for testing.
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Let pretraining see the held-out test images too.
    #[arg(long)]
    pretrain_includes_test: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    /// JSON pretraining config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pretext task: instance, jigsaw or inpainting.
    #[arg(long)]
    task: Option<String>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Contrastive temperature.
    #[arg(long)]
    tau: Option<f64>,
    /// Peak learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Linear warmup length in epochs.
    #[arg(long)]
    warmup_epochs: Option<usize>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Projection head output size.
    #[arg(long)]
    projection_dim: Option<usize>,
    /// Write a checkpoint every this many epochs (0 disables).
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Encoder preset: tiny, small or large.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Let pretraining see the dataset's held-out test images too.
    #[arg(long)]
    pretrain_includes_test: bool,
    /// Checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FinetuneArgs {
    /// JSON transfer config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Pretrained checkpoint (not needed in scratch mode).
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Labeled samples per class.
    #[arg(long)]
    shots: Option<usize>,
    /// linear, full or scratch.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Peak learning rate.
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Classify the projection head output instead of the embedding.
    #[arg(long)]
    keep_projection: bool,
    /// Encoder preset for scratch mode: tiny, small or large.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Classifier checkpoint directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON file with `ckpt`, `data` and `results`; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Classifier checkpoint.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Dataset directory or manifest file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Directory receiving results.csv and summary.md; defaults to the checkpoint directory.
    #[arg(long)]
    results: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    /// Checkpoint directory.
    #[arg(long)]
    ckpt: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl<E: Into<sslscene::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into().to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let line = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line} (see --help)");
            return ExitCode::from(1);
        }
    };
    let outcome = match cli.command {
        Command::DataSynth(a) => data_synth(a),
        Command::Pretrain(a) => run_pretrain(a),
        Command::Finetune(a) => run_finetune(a),
        Command::Eval(a) => run_eval(a),
        Command::Experiment(a) => run_sweep(a),
        Command::Inspect(a) => inspect(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

/// Overlays the given flags on the config file (if any) and decodes the result.
fn merged<T: DeserializeOwned>(config: Option<&Path>, flags: Vec<(&str, Option<Value>)>) -> Result<T, Failure> {
    let mut obj = match config {
        None => Map::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            match serde_json::from_str(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(Failure::Usage(format!("{}: expected a JSON object", p.display()))),
                Err(e) => return Err(Failure::Usage(format!("{}: {e}", p.display()))),
            }
        }
    };
    for (key, value) in flags {
        if let Some(v) = value {
            obj.insert(key.to_string(), v);
        }
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| Failure::Usage(format!("config: {e}")))
}

fn some<T: serde::Serialize>(v: &Option<T>) -> Option<Value> {
    v.as_ref().map(|v| serde_json::to_value(v).expect("flag values serialize"))
}

/// A set boolean flag overrides the config; an absent one leaves it alone.
fn flag(set: bool) -> Option<Value> {
    set.then_some(Value::Bool(true))
}

fn encoder_preset(name: &Option<String>) -> Result<Option<Value>, Failure> {
    let Some(name) = name else { return Ok(None) };
    let cfg = match name.as_str() {
        "tiny" => EncoderConfig::tiny(3),
        "small" => EncoderConfig::small(3),
        "large" => EncoderConfig::large(3),
        other => return Err(Failure::Usage(format!("unknown encoder preset {other:?} (expected tiny, small or large)"))),
    };
    Ok(Some(serde_json::to_value(cfg).expect("encoder config serializes")))
}

fn open_dataset(path: &Path) -> Result<DatasetManifest, Failure> {
    Ok(ensure_split(load_manifest(path)?, &SplitSpec::default())?)
}

fn progress(event: &str, body: Value) {
    let mut line = json!({ "event": event });
    if let (Value::Object(l), Value::Object(b)) = (&mut line, body) {
        l.extend(b);
    }
    eprintln!("{line}");
}

#[derive(Deserialize)]
struct SynthJob {
    #[serde(flatten)]
    spec: SynthSpec,
    #[serde(default = "default_test_fraction")]
    test_fraction: f64,
    #[serde(default)]
    pretrain_includes_test: bool,
    out: PathBuf,
}

fn default_test_fraction() -> f64 {
    SplitSpec::default().test_fraction
}

fn data_synth(a: SynthArgs) -> Outcome {
    let job: SynthJob = merged(
        a.config.as_deref(),
        vec![
            ("classes", some(&a.classes)),
            ("bands", some(&a.bands)),
            ("size", some(&a.size)),
            ("per_class", some(&a.per_class)),
            ("seed", some(&a.seed)),
            ("family", some(&a.family)),
            ("clutter", some(&a.clutter)),
            ("name", some(&a.name)),
            ("test_fraction", some(&a.test_fraction)),
            ("pretrain_includes_test", flag(a.pretrain_includes_test)),
            ("out", some(&a.out)),
        ],
    )?;
    let manifest = synth_generate(&job.spec, &job.out)?;
    let spec = SplitSpec {
        test_fraction: job.test_fraction,
        seed: job.spec.seed,
        pretrain_includes_test: job.pretrain_includes_test,
        ..SplitSpec::default()
    };
    let path = split(&manifest, &spec)?.save(&job.out)?;
    progress("data-synth", json!({ "samples": manifest.len(), "classes": manifest.num_classes() }));
    println!("{}", path.display());
    Ok(())
}

#[derive(Deserialize)]
struct PretrainJob {
    #[serde(flatten)]
    pretrain: PretrainConfig,
    #[serde(default)]
    encoder: Option<EncoderConfig>,
    #[serde(default)]
    pretrain_includes_test: bool,
    data: PathBuf,
    out: PathBuf,
}

fn run_pretrain(a: PretrainArgs) -> Outcome {
    let job: PretrainJob = merged(
        a.config.as_deref(),
        vec![
            ("task", some(&a.task)),
            ("epochs", some(&a.epochs)),
            ("batch_size", some(&a.batch)),
            ("tau", some(&a.tau)),
            ("base_lr", some(&a.lr)),
            ("warmup_epochs", some(&a.warmup_epochs)),
            ("weight_decay", some(&a.weight_decay)),
            ("projection_dim", some(&a.projection_dim)),
            ("checkpoint_every", some(&a.checkpoint_every)),
            ("encoder", encoder_preset(&a.encoder)?),
            ("seed", some(&a.seed)),
            ("pretrain_includes_test", flag(a.pretrain_includes_test)),
            ("data", some(&a.data)),
            ("out", some(&a.out)),
        ],
    )?;
    let mut data = open_dataset(&job.data)?;
    if job.pretrain_includes_test {
        data = data.with_pretrain_includes_test(true);
    }
    progress("pretrain", json!({ "task": job.pretrain.task, "pool": data.pretrain_pool().len() }));
    let bands = data.num_bands().unwrap_or(3);
    let encoder = EncoderConfig {
        in_bands: bands,
        ..job.encoder.unwrap_or_else(|| EncoderConfig::small(bands))
    };
    let done = pretrain_with(&data, &encoder, &job.pretrain, Some(&job.out), &mut |r| {
        progress("epoch", json!({ "epoch": r.epoch, "loss": r.mean_loss, "lr": r.lr, "seconds": r.wall_seconds }));
    })?;
    let path = done.checkpoint.unwrap_or(job.out);
    println!("{}", path.display());
    Ok(())
}

#[derive(Deserialize)]
struct FinetuneJob {
    #[serde(flatten)]
    transfer: TransferConfig,
    #[serde(default)]
    ckpt: Option<PathBuf>,
    data: PathBuf,
    out: PathBuf,
}

fn run_finetune(a: FinetuneArgs) -> Outcome {
    let job: FinetuneJob = merged(
        a.config.as_deref(),
        vec![
            ("ckpt", some(&a.ckpt)),
            ("data", some(&a.data)),
            ("shots", some(&a.shots)),
            ("mode", some(&a.mode)),
            ("epochs", some(&a.epochs)),
            ("batch_size", some(&a.batch)),
            ("base_lr", some(&a.lr)),
            ("weight_decay", some(&a.weight_decay)),
            ("keep_projection", a.keep_projection.then_some(Value::Bool(true))),
            ("encoder", encoder_preset(&a.encoder)?),
            ("seed", some(&a.seed)),
            ("out", some(&a.out)),
        ],
    )?;
    let data = open_dataset(&job.data)?;
    let mut cfg = job.transfer;
    if let Some(enc) = &mut cfg.encoder {
        enc.in_bands = data.num_bands().unwrap_or(enc.in_bands);
    }
    let checkpoint = match &job.ckpt {
        Some(p) => Some(load_checkpoint(p, false)?),
        None => None,
    };
    let few = few_shot_sample(&data, cfg.shots, cfg.seed)?;
    let tuned = finetune(checkpoint, &few, &cfg)?;
    for r in &tuned.history {
        progress("epoch", json!({ "epoch": r.epoch, "loss": r.mean_loss, "lr": r.lr, "seconds": r.wall_seconds }));
    }
    let path = tuned.save(&job.out)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Deserialize)]
struct EvalJob {
    ckpt: PathBuf,
    data: PathBuf,
    #[serde(default)]
    results: Option<PathBuf>,
}

fn run_eval(a: EvalArgs) -> Outcome {
    let job: EvalJob = merged(
        a.config.as_deref(),
        vec![("ckpt", some(&a.ckpt)), ("data", some(&a.data)), ("results", some(&a.results))],
    )?;
    let start = Instant::now();
    let (mut model, meta) = load_checkpoint(&job.ckpt, false)?;
    let data = open_dataset(&job.data)?;
    if !meta.classes.is_empty() && meta.classes != data.classes() {
        return Err(Failure::Runtime(format!(
            "classifier was trained on classes {:?}, dataset has {:?}",
            meta.classes,
            data.classes()
        )));
    }
    let oa = test_accuracy(&mut model, &data)?;
    let dir = job.results.unwrap_or_else(|| job.ckpt.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let record = ResultRecord::from_classifier(
        &meta,
        data.name(),
        oa,
        start.elapsed().as_secs_f64(),
        &job.ckpt.display().to_string(),
    );
    let csv = dir.join("results.csv");
    append_record(&csv, &record)?;
    write_summary(&read_records(&csv)?, &dir.join("summary.md"))?;
    println!("oa={oa:.6}");
    println!("{}", csv.display());
    Ok(())
}

fn run_sweep(a: ExperimentArgs) -> Outcome {
    let cfg: ExperimentConfig = merged(
        a.config.as_deref(),
        vec![("seeds", some(&a.seeds)), ("out_dir", some(&a.out))],
    )?;
    cfg.validate()?;
    run_experiment_with(&cfg, &mut |r| {
        progress("record", serde_json::to_value(r).expect("records serialize"));
    })?;
    println!("{}", cfg.out_dir.join("results.csv").display());
    println!("{}", cfg.out_dir.join("summary.md").display());
    Ok(())
}

fn inspect(a: InspectArgs) -> Outcome {
    let (model, meta) = load_checkpoint(&a.ckpt, false)?;
    let mut v = serde_json::to_value(&meta).expect("meta serializes");
    if let Value::Object(m) = &mut v {
        m.insert("num_params".into(), json!(sslscene::models::Module::num_params(&model)));
    }
    println!("{}", serde_json::to_string_pretty(&v).expect("meta serializes"));
    Ok(())
}
