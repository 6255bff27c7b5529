//! Overall accuracy, mean ± std summaries and the factor-study experiment runner.

mod report;
mod runner;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::{DatasetError, DatasetManifest, SplitTag};
use crate::models::{CheckpointMeta, Model, ModelError};

pub use report::{render_summary, write_summary};
pub use runner::{append_record, read_records, run_experiment, run_experiment_with, ExperimentConfig, SourceSpec};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("no predictions to score")]
    EmptyInput,
    #[error("group {0} has no records")]
    EmptyGroup(String),
    #[error("experiment axis {0} is empty")]
    EmptyAxis(&'static str),
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("{dir} holds results of different settings; use a fresh output directory")]
    SettingsChanged { dir: PathBuf },
    #[error("results file {path}: {reason}")]
    Records { path: PathBuf, reason: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Fraction of predictions equal to their label.
pub fn overall_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, ExperimentError> {
    if predictions.len() != labels.len() {
        return Err(ExperimentError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(ExperimentError::EmptyInput);
    }
    let correct = predictions.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Overall accuracy of a classifier on the dataset's test split.
pub fn test_accuracy(model: &mut Model, dataset: &DatasetManifest) -> Result<f64, ExperimentError> {
    let ids = dataset.ids(SplitTag::Test);
    let mut labels = Vec::with_capacity(ids.len());
    for id in ids {
        labels.push(dataset.label_of(id).ok_or_else(|| {
            ExperimentError::InvalidConfig(format!("test sample {id:?} is unlabeled"))
        })?);
    }
    let samples = dataset.read_samples(ids)?;
    let predictions = crate::transfer::predict(model, &samples)?;
    overall_accuracy(&predictions, &labels)
}

/// One cell of a factor study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub pretext: String,
    pub source: String,
    pub target: String,
    pub fraction: f64,
    pub shots: usize,
    pub seed: u64,
    pub oa: f64,
    pub wall_seconds: f64,
    pub checkpoint: String,
}

/// Identity of a record, excluding outcome fields.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub pretext: String,
    pub source: String,
    pub target: String,
    pub fraction: String,
    pub shots: usize,
    pub seed: u64,
}

impl ResultRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            pretext: self.pretext.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
            fraction: format_fraction(self.fraction),
            shots: self.shots,
            seed: self.seed,
        }
    }

    fn axis(&self, axis: GroupAxis) -> String {
        match axis {
            GroupAxis::Pretext => self.pretext.clone(),
            GroupAxis::Source => self.source.clone(),
            GroupAxis::Target => self.target.clone(),
            GroupAxis::Fraction => format_fraction(self.fraction),
            GroupAxis::Shots => self.shots.to_string(),
            GroupAxis::Seed => self.seed.to_string(),
        }
    }
}

impl ResultRecord {
    /// Describes an evaluated classifier checkpoint using the settings stored in its meta.
    pub fn from_classifier(meta: &CheckpointMeta, target: &str, oa: f64, wall_seconds: f64, checkpoint: &str) -> Self {
        let cfg = &meta.config;
        let transfer = &cfg["transfer"];
        ResultRecord {
            pretext: meta.pretext.map_or_else(|| "scratch".to_string(), |p| p.to_string()),
            source: cfg["upstream"]["dataset"].as_str().unwrap_or("none").to_string(),
            target: target.to_string(),
            fraction: 1.0,
            shots: transfer["shots"].as_u64().unwrap_or(0) as usize,
            seed: transfer["seed"].as_u64().unwrap_or(meta.seed),
            oa,
            wall_seconds,
            checkpoint: checkpoint.to_string(),
        }
    }
}

pub(crate) fn format_fraction(f: f64) -> String {
    format!("{f}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupAxis {
    Pretext,
    Source,
    Target,
    Fraction,
    Shots,
    Seed,
}

impl GroupAxis {
    /// Every axis except the seed, the usual grouping for mean ± std over seeds.
    pub const CELL: [GroupAxis; 5] = [
        GroupAxis::Pretext,
        GroupAxis::Source,
        GroupAxis::Target,
        GroupAxis::Fraction,
        GroupAxis::Shots,
    ];
}

/// Mean ± sample standard deviation of OA within one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// Axis values in the order of the requested grouping.
    pub key: Vec<String>,
    pub mean: f64,
    /// (n − 1)-denominator standard deviation; 0 for single-record groups.
    pub std: f64,
    pub n: usize,
    pub single_seed: bool,
}

/// Mean and sample standard deviation of a non-empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups records by `axes` (in first-seen order) and summarises OA per group.
pub fn summarize(records: &[ResultRecord], axes: &[GroupAxis]) -> Result<Vec<GroupSummary>, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::EmptyGroup("<all>".into()));
    }
    let mut groups: Vec<(Vec<String>, Vec<f64>)> = Vec::new();
    for r in records {
        let key: Vec<String> = axes.iter().map(|&a| r.axis(a)).collect();
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.oa),
            None => groups.push((key, vec![r.oa])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(key, values)| {
            let (mean, std) = mean_std(&values);
            GroupSummary {
                key,
                mean,
                std,
                n: values.len(),
                single_seed: values.len() == 1,
            }
        })
        .collect())
}
