//! Directory checkpoints: `meta.json`, `params/<path>.bin`, `checksums.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::param::Module;
use super::{build_encoder, EncoderConfig, HeadConfig, Model, ModelError, Pretext};

pub const FORMAT_VERSION: u32 = 1;
const PARAM_MAGIC: &[u8; 4] = b"SSLP";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingState {
    pub epoch: usize,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub encoder: EncoderConfig,
    pub heads: Vec<HeadConfig>,
    pub pretext: Option<Pretext>,
    #[serde(default)]
    pub state: TrainingState,
    pub seed: u64,
    #[serde(default)]
    pub dataset_fingerprint: String,
    /// Class names of the classifier head, empty for pretext checkpoints.
    #[serde(default)]
    pub classes: Vec<String>,
    /// The training config that produced the checkpoint, for audit.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl CheckpointMeta {
    pub fn for_model(model: &Model) -> Self {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            encoder: model.config().clone(),
            heads: model.heads().to_vec(),
            pretext: None,
            state: TrainingState::default(),
            seed: model.seed(),
            dataset_fingerprint: String::new(),
            classes: Vec::new(),
            config: serde_json::Value::Null,
        }
    }
}

fn encode_param(shape: &[usize], values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * shape.len() + 4 * values.len());
    out.extend_from_slice(PARAM_MAGIC);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_param(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f32>), String> {
    let u32_at = |i: usize| -> Result<u32, String> {
        bytes
            .get(i..i + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| "truncated header".to_string())
    };
    if bytes.get(..4) != Some(PARAM_MAGIC) {
        return Err("bad magic".into());
    }
    let rank = u32_at(4)? as usize;
    let shape = (0..rank).map(|i| u32_at(8 + 4 * i).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
    let start = 8 + 4 * rank;
    let n: usize = shape.iter().product();
    if bytes.len() != start + 4 * n {
        return Err(format!("payload has {} bytes, shape needs {}", bytes.len() - start.min(bytes.len()), 4 * n));
    }
    let values = bytes[start..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((shape, values))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), ModelError> {
    fs::write(path, bytes).map_err(|e| ModelError::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>, ModelError> {
    fs::read(path).map_err(|e| ModelError::io(path, e))
}

/// Writes `model` under directory `path`. The encoder config and head list in the
/// stored meta are taken from the model itself.
pub fn save_checkpoint(model: &Model, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<PathBuf, ModelError> {
    let dir = path.as_ref();
    let params_dir = dir.join("params");
    if params_dir.exists() {
        fs::remove_dir_all(&params_dir).map_err(|e| ModelError::io(&params_dir, e))?;
    }
    fs::create_dir_all(&params_dir).map_err(|e| ModelError::io(&params_dir, e))?;
    let mut meta = meta.clone();
    meta.format_version = FORMAT_VERSION;
    meta.encoder = model.config().clone();
    meta.heads = model.heads().to_vec();
    meta.seed = model.seed();

    let mut sums = BTreeMap::new();
    let mut result = Ok(());
    model.visit("", &mut |name, p| {
        if result.is_err() {
            return;
        }
        let rel = format!("params/{name}.bin");
        let bytes = encode_param(&p.shape, &p.value);
        sums.insert(rel.clone(), crc32fast::hash(&bytes));
        result = write(&dir.join(&rel), &bytes);
    });
    result?;
    let meta_bytes = serde_json::to_vec_pretty(&meta).expect("meta serializes");
    sums.insert("meta.json".to_string(), crc32fast::hash(&meta_bytes));
    write(&dir.join("meta.json"), &meta_bytes)?;
    let sum_bytes = serde_json::to_vec_pretty(&sums).expect("checksums serialize");
    write(&dir.join("checksums.json"), &sum_bytes)?;
    Ok(dir.to_path_buf())
}

fn malformed(path: &Path, reason: impl ToString) -> ModelError {
    ModelError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads a checkpoint directory. With `strip_head`, only `encoder.*` parameters are
/// loaded and the returned model has no heads.
pub fn load_checkpoint(path: impl AsRef<Path>, strip_head: bool) -> Result<(Model, CheckpointMeta), ModelError> {
    let dir = path.as_ref();
    let sums_path = dir.join("checksums.json");
    let sums: BTreeMap<String, u32> =
        serde_json::from_slice(&read(&sums_path)?).map_err(|e| malformed(&sums_path, e))?;
    let checked = |rel: &str| -> Result<Vec<u8>, ModelError> {
        let bytes = read(&dir.join(rel))?;
        match sums.get(rel) {
            Some(&crc) if crc == crc32fast::hash(&bytes) => Ok(bytes),
            _ => Err(ModelError::ChecksumMismatch(rel.to_string())),
        }
    };

    let meta_path = dir.join("meta.json");
    let raw: serde_json::Value = serde_json::from_slice(&checked("meta.json")?).map_err(|e| malformed(&meta_path, e))?;
    let found = raw.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            expected: FORMAT_VERSION,
            found,
        });
    }
    let mut meta: CheckpointMeta = serde_json::from_value(raw).map_err(|e| malformed(&meta_path, e))?;

    let mut model = build_encoder(&meta.encoder, meta.seed)?;
    if strip_head {
        meta.heads.clear();
        meta.classes.clear();
    } else {
        for h in &meta.heads {
            model.attach(h, meta.seed)?;
        }
    }

    let mut consumed = BTreeSet::new();
    let mut result = Ok(());
    model.visit_mut("", &mut |name, p| {
        if result.is_err() {
            return;
        }
        let rel = format!("params/{name}.bin");
        result = (|| {
            if !dir.join(&rel).exists() {
                return Err(ModelError::MissingParameter(name.to_string()));
            }
            let (shape, values) = decode_param(&checked(&rel)?).map_err(|e| malformed(&dir.join(&rel), e))?;
            if shape != p.shape {
                return Err(ModelError::ShapeMismatch {
                    name: name.to_string(),
                    expected: p.shape.clone(),
                    found: shape,
                });
            }
            p.value = values;
            Ok(())
        })();
        consumed.insert(rel);
    });
    result?;
    for rel in sums.keys().filter(|k| k.starts_with("params/")) {
        let name = &rel["params/".len()..rel.len() - ".bin".len()];
        if !consumed.contains(rel) && !(strip_head && !name.starts_with("encoder.")) {
            return Err(ModelError::UnexpectedParameter(name.to_string()));
        }
    }
    Ok((model, meta))
}
