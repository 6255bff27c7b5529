use std::collections::{BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{format_fraction, test_accuracy, write_summary, ExperimentError, RecordKey, ResultRecord};
use crate::datasets::{ensure_split, few_shot_sample, load_manifest, mix, subsample_fraction, DatasetManifest, SplitSpec};
use crate::models::{load_checkpoint, EncoderConfig, Pretext};
use crate::pretrain::{pretrain, PretrainConfig};
use crate::rng;
use crate::transfer::{finetune, TransferConfig, TransferMode};

/// A pretraining source: one manifest, or several mixed into one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Single(PathBuf),
    Mixed(Vec<PathBuf>),
}

/// A factor study: the cross product of its axes, each cell repeated per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub pretexts: Vec<Pretext>,
    /// Also train from-scratch baselines (pretext `scratch`, source `none`).
    #[serde(default)]
    pub include_scratch: bool,
    pub sources: Vec<SourceSpec>,
    pub targets: Vec<PathBuf>,
    #[serde(default = "one")]
    pub fractions: Vec<f64>,
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Encoder architecture; `in_bands` is taken from each manifest.
    #[serde(default)]
    pub encoder: EncoderConfig,
    /// Shared pretraining settings; `task` and `seed` are set per cell.
    #[serde(default)]
    pub pretrain: PretrainConfig,
    /// Shared transfer settings; `shots` and `seed` are set per cell. Pretrained cells use
    /// `mode` (linear unless changed), scratch cells always use scratch mode.
    #[serde(default)]
    pub transfer: TransferConfig,
    /// Applied to manifests that carry no splits yet. Fixed across the sweep.
    #[serde(default)]
    pub split: SplitSpec,
    pub out_dir: PathBuf,
}

fn one() -> Vec<f64> {
    vec![1.0]
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.pretexts.is_empty() && !self.include_scratch {
            return Err(ExperimentError::EmptyAxis("pretexts"));
        }
        if self.sources.is_empty() && !self.pretexts.is_empty() {
            return Err(ExperimentError::EmptyAxis("sources"));
        }
        for (axis, empty) in [
            ("targets", self.targets.is_empty()),
            ("fractions", self.fractions.is_empty()),
            ("shots", self.shots.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(ExperimentError::EmptyAxis(axis));
            }
        }
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(ExperimentError::InvalidConfig(format!("fraction {f} outside (0, 1]")));
        }
        if self.shots.contains(&0) {
            return Err(ExperimentError::InvalidConfig("shots must be at least 1".into()));
        }
        Ok(())
    }

    /// Fingerprint of everything except the axes, so sweeps with different axes can share
    /// an output directory but different hyperparameters cannot.
    fn settings_fingerprint(&self) -> String {
        let v = serde_json::json!({
            "encoder": self.encoder,
            "pretrain": self.pretrain,
            "transfer": self.transfer,
            "split": self.split,
        });
        format!("{:016x}", rng::fnv1a(v.to_string().as_bytes()))
    }
}

const HEADER: [&str; 9] = [
    "pretext",
    "source",
    "target",
    "fraction",
    "shots",
    "seed",
    "oa",
    "wall_seconds",
    "checkpoint",
];

fn results_path(out: &Path) -> PathBuf {
    out.join("results.csv")
}

/// Reads `results.csv`; a missing file holds no records.
pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>, ExperimentError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bad = |e: csv::Error| ExperimentError::Records {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(bad)?;
    reader.deserialize().collect::<Result<Vec<ResultRecord>, _>>().map_err(bad)
}

/// Appends one row, writing the header first if the file is new.
pub fn append_record(path: &Path, record: &ResultRecord) -> Result<(), ExperimentError> {
    let fresh = !path.exists();
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| ExperimentError::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let bad = |e: csv::Error| ExperimentError::Records {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    if fresh {
        w.write_record(HEADER).map_err(bad)?;
    }
    w.serialize(record).map_err(bad)?;
    w.flush().map_err(|e| ExperimentError::io(path, e))
}

fn record_failure(out: &Path, key: &RecordKey, error: &str) -> Result<(), ExperimentError> {
    let path = out.join("failures.jsonl");
    let line = serde_json::json!({
        "pretext": key.pretext, "source": key.source, "target": key.target,
        "fraction": key.fraction, "shots": key.shots, "seed": key.seed, "error": error,
    });
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| ExperimentError::io(&path, e))?;
    writeln!(f, "{line}").map_err(|e| ExperimentError::io(&path, e))
}

fn load_split(path: &Path, spec: &SplitSpec) -> Result<DatasetManifest, ExperimentError> {
    Ok(ensure_split(load_manifest(path)?, spec)?)
}

struct Source {
    name: String,
    manifest: DatasetManifest,
}

fn load_source(spec: &SourceSpec, split_spec: &SplitSpec) -> Result<Source, ExperimentError> {
    let manifest = match spec {
        SourceSpec::Single(p) => load_split(p, split_spec)?,
        SourceSpec::Mixed(paths) => {
            let parts = paths.iter().map(|p| load_split(p, split_spec)).collect::<Result<Vec<_>, _>>()?;
            let refs: Vec<&DatasetManifest> = parts.iter().collect();
            mix(&refs)?
        }
    };
    Ok(Source {
        name: manifest.name().to_string(),
        manifest,
    })
}

fn slug(parts: &[&str]) -> String {
    parts
        .iter()
        .map(|p| p.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect::<String>())
        .collect::<Vec<_>>()
        .join("-")
}

/// Runs the sweep, appending to `out_dir/results.csv` and skipping cells already recorded.
///
/// Each (pretext, source, fraction, seed) is pretrained once and then fine-tuned for every
/// (target, shots). Failures are appended to `failures.jsonl` and do not stop the sweep.
/// Returns the records of this config's cells, old and new, and rewrites `summary.md`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>, ExperimentError> {
    run_experiment_with(cfg, &mut |_| {})
}

/// [`run_experiment`] with a callback per finished record.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    on_record: &mut dyn FnMut(&ResultRecord),
) -> Result<Vec<ResultRecord>, ExperimentError> {
    cfg.validate()?;
    let out = &cfg.out_dir;
    fs::create_dir_all(out).map_err(|e| ExperimentError::io(out, e))?;
    let settings_path = out.join("settings.json");
    let fp = cfg.settings_fingerprint();
    if settings_path.exists() {
        let old: serde_json::Value = serde_json::from_slice(&fs::read(&settings_path).map_err(|e| ExperimentError::io(&settings_path, e))?)
            .unwrap_or_default();
        if old.get("fingerprint").and_then(|v| v.as_str()) != Some(fp.as_str()) {
            return Err(ExperimentError::SettingsChanged { dir: out.clone() });
        }
    } else {
        let v = serde_json::json!({ "fingerprint": fp, "config": cfg });
        fs::write(&settings_path, serde_json::to_vec_pretty(&v).expect("config serializes"))
            .map_err(|e| ExperimentError::io(&settings_path, e))?;
    }

    let csv_path = results_path(out);
    let mut existing: HashMap<RecordKey, ResultRecord> =
        read_records(&csv_path)?.into_iter().map(|r| (r.key(), r)).collect();
    let targets: Vec<DatasetManifest> = cfg.targets.iter().map(|p| load_split(p, &cfg.split)).collect::<Result<_, _>>()?;
    let mut wanted = BTreeSet::new();

    let mut emit = |rec: ResultRecord, existing: &mut HashMap<RecordKey, ResultRecord>| -> Result<(), ExperimentError> {
        append_record(&csv_path, &rec)?;
        on_record(&rec);
        existing.insert(rec.key(), rec);
        Ok(())
    };

    for seed in &cfg.seeds {
        let seed = *seed;
        if cfg.include_scratch {
            for target in &targets {
                for &shots in &cfg.shots {
                    let key = RecordKey {
                        pretext: "scratch".into(),
                        source: "none".into(),
                        target: target.name().into(),
                        fraction: format_fraction(1.0),
                        shots,
                        seed,
                    };
                    wanted.insert(key.clone());
                    if existing.contains_key(&key) {
                        continue;
                    }
                    let start = Instant::now();
                    let dir = out.join("classifiers").join(slug(&["scratch", target.name(), &format!("k{shots}"), &format!("s{seed}")]));
                    let tcfg = TransferConfig {
                        mode: TransferMode::Scratch,
                        shots,
                        seed,
                        encoder: Some(EncoderConfig {
                            in_bands: target.num_bands().unwrap_or(cfg.encoder.in_bands),
                            ..cfg.encoder.clone()
                        }),
                        ..cfg.transfer.clone()
                    };
                    let result = (|| -> crate::Result<f64> {
                        let fs = few_shot_sample(target, shots, seed)?;
                        let mut ft = finetune(None, &fs, &tcfg)?;
                        ft.save(&dir)?;
                        Ok(test_accuracy(&mut ft.model, &fs)?)
                    })();
                    match result {
                        Ok(oa) => emit(
                            ResultRecord {
                                pretext: key.pretext.clone(),
                                source: key.source.clone(),
                                target: key.target.clone(),
                                fraction: 1.0,
                                shots,
                                seed,
                                oa,
                                wall_seconds: start.elapsed().as_secs_f64(),
                                checkpoint: dir.display().to_string(),
                            },
                            &mut existing,
                        )?,
                        Err(e) => record_failure(out, &key, &e.to_string())?,
                    }
                }
            }
        }
        for &pretext in &cfg.pretexts {
            for source_spec in &cfg.sources {
                let source = load_source(source_spec, &cfg.split)?;
                for &fraction in &cfg.fractions {
                    let source_name = source.name.as_str();
                    let keys: Vec<(RecordKey, &DatasetManifest)> = targets
                        .iter()
                        .flat_map(|t| {
                            cfg.shots.iter().map(move |&shots| {
                                (
                                    RecordKey {
                                        pretext: pretext.to_string(),
                                        source: source_name.to_string(),
                                        target: t.name().into(),
                                        fraction: format_fraction(fraction),
                                        shots,
                                        seed,
                                    },
                                    t,
                                )
                            })
                        })
                        .collect();
                    wanted.extend(keys.iter().map(|(k, _)| k.clone()));
                    let todo: Vec<_> = keys.into_iter().filter(|(k, _)| !existing.contains_key(k)).collect();
                    if todo.is_empty() {
                        continue;
                    }
                    let ck_dir = out.join("checkpoints").join(slug(&[
                        pretext.as_str(),
                        &source.name,
                        &format!("f{}", format_fraction(fraction)),
                        &format!("s{seed}"),
                    ]));
                    let pre_start = Instant::now();
                    let ready = load_checkpoint(&ck_dir, false).is_ok();
                    let pretrained = if ready {
                        Ok(())
                    } else {
                        (|| -> crate::Result<()> {
                            let pool = if fraction < 1.0 {
                                subsample_fraction(&source.manifest, fraction, rng::derive_str(seed, "fraction"))?
                            } else {
                                source.manifest.clone()
                            };
                            let enc = EncoderConfig {
                                in_bands: pool.num_bands().unwrap_or(cfg.encoder.in_bands),
                                ..cfg.encoder.clone()
                            };
                            let pcfg = PretrainConfig {
                                task: pretext,
                                seed,
                                ..cfg.pretrain.clone()
                            };
                            pretrain(&pool, &enc, &pcfg, Some(&ck_dir))?;
                            Ok(())
                        })()
                    };
                    let pretrain_seconds = pre_start.elapsed().as_secs_f64();
                    for (key, target) in todo {
                        let start = Instant::now();
                        let result = match &pretrained {
                            Err(e) => Err(format!("pretraining failed: {e}")),
                            Ok(()) => (|| -> crate::Result<(f64, PathBuf)> {
                                let (model, meta) = load_checkpoint(&ck_dir, false)?;
                                let fs = few_shot_sample(target, key.shots, seed)?;
                                let tcfg = TransferConfig {
                                    shots: key.shots,
                                    seed,
                                    ..cfg.transfer.clone()
                                };
                                let mut ft = finetune(Some((model, meta)), &fs, &tcfg)?;
                                let dir = out.join("classifiers").join(slug(&[
                                    &key.pretext,
                                    &key.source,
                                    &format!("f{}", key.fraction),
                                    &key.target,
                                    &format!("k{}", key.shots),
                                    &format!("s{seed}"),
                                ]));
                                ft.save(&dir)?;
                                Ok((test_accuracy(&mut ft.model, &fs)?, dir))
                            })()
                            .map_err(|e| e.to_string()),
                        };
                        match result {
                            Ok((oa, dir)) => emit(
                                ResultRecord {
                                    pretext: key.pretext.clone(),
                                    source: key.source.clone(),
                                    target: key.target.clone(),
                                    fraction,
                                    shots: key.shots,
                                    seed,
                                    oa,
                                    wall_seconds: pretrain_seconds + start.elapsed().as_secs_f64(),
                                    checkpoint: dir.display().to_string(),
                                },
                                &mut existing,
                            )?,
                            Err(e) => record_failure(out, &key, &e)?,
                        }
                    }
                }
            }
        }
    }

    let all = read_records(&csv_path)?;
    write_summary(&all, &out.join("summary.md"))?;
    Ok(all.into_iter().filter(|r| wanted.contains(&r.key())).collect())
}
