use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_raster, BandInfo, DatasetError, RasterSample, MIN_SIDE};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitTag {
    Pretrain,
    Finetune,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    #[serde(default)]
    pub pretrain: Vec<String>,
    #[serde(default)]
    pub finetune: Vec<String>,
    #[serde(default)]
    pub test: Vec<String>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Enumerates the samples of a dataset, its classes and its split tags.
///
/// Pixels are never held here; [`DatasetManifest::read_sample`] decodes them on demand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    name: String,
    num_classes: usize,
    classes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    bands: Vec<BandInfo>,
    entries: Vec<ManifestEntry>,
    #[serde(default)]
    splits: Splits,
    #[serde(default, skip_serializing_if = "is_false")]
    pretrain_includes_test: bool,
    #[serde(skip)]
    root: PathBuf,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.num_classes == other.num_classes
            && self.classes == other.classes
            && self.bands == other.bands
            && self.entries == other.entries
            && self.splits == other.splits
            && self.pretrain_includes_test == other.pretrain_includes_test
            && self.root == other.root
    }
}

/// Loads a manifest from a JSON file, or from `manifest.json` inside a directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, DatasetError> {
    let mut path = path.as_ref().to_path_buf();
    if path.is_dir() {
        path.push(MANIFEST_FILE);
    }
    let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
    let mut manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| DatasetError::Malformed {
            path: path.clone(),
            reason: e.to_string(),
        })?;
    manifest.root = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    manifest.validate()?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn new(
        name: impl Into<String>,
        root: impl Into<PathBuf>,
        classes: Vec<String>,
        bands: Vec<BandInfo>,
        entries: Vec<ManifestEntry>,
    ) -> Result<Self, DatasetError> {
        let mut m = DatasetManifest {
            name: name.into(),
            num_classes: classes.len(),
            classes,
            bands,
            entries,
            splits: Splits::default(),
            pretrain_includes_test: false,
            root: root.into(),
            index: HashMap::new(),
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks every manifest invariant and rebuilds the id index.
    pub fn validate(&mut self) -> Result<(), DatasetError> {
        if !self.classes.is_empty() && self.classes.len() != self.num_classes {
            return Err(DatasetError::Invalid(format!(
                "{} class names for num_classes={}",
                self.classes.len(),
                self.num_classes
            )));
        }
        let mut index = HashMap::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if index.insert(e.id.clone(), i).is_some() {
                return Err(DatasetError::DuplicateId(e.id.clone()));
            }
            if let Some(label) = e.label {
                if label >= self.num_classes {
                    return Err(DatasetError::LabelOutOfRange {
                        id: e.id.clone(),
                        label,
                        num_classes: self.num_classes,
                    });
                }
            }
        }
        let mut seen = HashSet::new();
        for id in self
            .splits
            .pretrain
            .iter()
            .chain(&self.splits.finetune)
            .chain(&self.splits.test)
        {
            if !index.contains_key(id) {
                return Err(DatasetError::UnknownId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(DatasetError::SplitOverlap { id: id.clone() });
            }
        }
        self.index = index;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<PathBuf, DatasetError> {
        let mut path = path.as_ref().to_path_buf();
        if path.is_dir() {
            path.push(MANIFEST_FILE);
        }
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(&path, text).map_err(|e| DatasetError::io(&path, e))?;
        Ok(path)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn bands(&self) -> &[BandInfo] {
        &self.bands
    }

    pub fn num_bands(&self) -> Option<usize> {
        (!self.bands.is_empty()).then_some(self.bands.len())
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn pretrain_includes_test(&self) -> bool {
        self.pretrain_includes_test
    }

    /// Same split, with the pretraining pool widened to cover test samples (or not).
    pub fn with_pretrain_includes_test(&self, include: bool) -> Self {
        self.with_splits(self.splits.clone(), include)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn label_of(&self, id: &str) -> Option<usize> {
        self.entry(id).and_then(|e| e.label)
    }

    pub fn split_of(&self, id: &str) -> Option<SplitTag> {
        let s = &self.splits;
        if s.test.iter().any(|x| x == id) {
            Some(SplitTag::Test)
        } else if s.finetune.iter().any(|x| x == id) {
            Some(SplitTag::Finetune)
        } else if s.pretrain.iter().any(|x| x == id) {
            Some(SplitTag::Pretrain)
        } else {
            None
        }
    }

    pub fn ids(&self, tag: SplitTag) -> &[String] {
        match tag {
            SplitTag::Pretrain => &self.splits.pretrain,
            SplitTag::Finetune => &self.splits.finetune,
            SplitTag::Test => &self.splits.test,
        }
    }

    /// Ids used for self-supervised pretraining.
    ///
    /// This is the pretrain split, or every entry when the manifest was split with
    /// `pretrain_includes_test`.
    pub fn pretrain_pool(&self) -> Vec<String> {
        if self.pretrain_includes_test {
            self.entries.iter().map(|e| e.id.clone()).collect()
        } else {
            self.splits.pretrain.clone()
        }
    }

    /// Short stable digest of the name, classes and pretraining pool.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(self.name.as_bytes());
        for c in &self.classes {
            bytes.push(0);
            bytes.extend_from_slice(c.as_bytes());
        }
        for id in self.pretrain_pool() {
            bytes.push(1);
            bytes.extend_from_slice(id.as_bytes());
        }
        format!("{:016x}", crate::rng::fnv1a(&bytes))
    }

    pub fn read_sample(&self, id: &str) -> Result<RasterSample, DatasetError> {
        let entry = self
            .entry(id)
            .ok_or_else(|| DatasetError::UnknownId(id.to_string()))?;
        let path = self.root.join(&entry.path);
        let pixels = read_raster(&path)?;
        let (c, h, w) = pixels.dim();
        if let Some(expected) = self.num_bands() {
            if c != expected {
                return Err(DatasetError::BandMismatch {
                    id: id.to_string(),
                    expected,
                    found: c,
                });
            }
        }
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(DatasetError::DecodeFailure {
                path,
                reason: format!("{h}x{w} is below the {MIN_SIDE}x{MIN_SIDE} minimum"),
            });
        }
        let bands = if self.bands.is_empty() {
            BandInfo::generic(c)
        } else {
            self.bands.clone()
        };
        Ok(RasterSample {
            id: id.to_string(),
            pixels,
            bands,
            label: entry.label,
            class_name: entry.label.and_then(|l| self.classes.get(l).cloned()),
        })
    }

    pub fn read_samples(&self, ids: &[String]) -> Result<Vec<RasterSample>, DatasetError> {
        ids.iter().map(|id| self.read_sample(id)).collect()
    }

    pub(crate) fn with_splits(&self, splits: Splits, pretrain_includes_test: bool) -> Self {
        let mut m = self.clone();
        m.splits = splits;
        m.pretrain_includes_test = pretrain_includes_test;
        m
    }

    /// Ids in entry order.
    pub(crate) fn order_ids(&self, ids: impl IntoIterator<Item = String>) -> Vec<String> {
        let mut v: Vec<(usize, String)> = ids
            .into_iter()
            .map(|id| (self.index[&id], id))
            .collect();
        v.sort_unstable_by_key(|(i, _)| *i);
        v.into_iter().map(|(_, id)| id).collect()
    }

    pub(crate) fn set_root(&mut self, root: PathBuf) {
        self.root = root;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(n: usize, classes: usize) -> Vec<ManifestEntry> {
        (0..n)
            .map(|i| ManifestEntry {
                id: format!("s_{i:04}"),
                path: format!("samples/s_{i:04}.sslr").into(),
                label: Some(i % classes),
            })
            .collect()
    }

    fn write_json(dir: &Path, value: serde_json::Value) -> PathBuf {
        let p = dir.join("manifest.json");
        fs::write(&p, value.to_string()).unwrap();
        p
    }

    #[test]
    fn loads_valid_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = DatasetManifest::new(
            "four",
            dir.path(),
            (0..4).map(|c| format!("c{c}")).collect(),
            BandInfo::generic(3),
            entries(800, 4),
        )
        .unwrap();
        m.save(dir.path()).unwrap();
        let loaded = load_manifest(dir.path()).unwrap();
        assert_eq!(loaded.num_classes(), 4);
        assert_eq!(loaded.len(), 800);
        assert_eq!(loaded, m);
    }

    #[test]
    fn duplicate_id_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_json(
            dir.path(),
            serde_json::json!({
                "name": "dup", "num_classes": 2, "classes": ["a", "b"],
                "entries": [
                    {"id": "s_0001", "path": "a.sslr", "label": 0},
                    {"id": "s_0001", "path": "b.sslr", "label": 1}
                ]
            }),
        );
        assert!(matches!(load_manifest(p), Err(DatasetError::DuplicateId(id)) if id == "s_0001"));
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_json(
            dir.path(),
            serde_json::json!({
                "name": "bad", "num_classes": 4, "classes": ["a", "b", "c", "d"],
                "entries": [{"id": "x", "path": "x.sslr", "label": 7}]
            }),
        );
        assert!(matches!(
            load_manifest(p),
            Err(DatasetError::LabelOutOfRange { label: 7, num_classes: 4, .. })
        ));
    }

    #[test]
    fn missing_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("nope.json")),
            Err(DatasetError::Io { .. })
        ));
        let p = dir.path().join("m.json");
        fs::write(&p, "{\"name\": 3").unwrap();
        assert!(matches!(load_manifest(&p), Err(DatasetError::Malformed { .. })));
    }

    #[test]
    fn overlapping_splits_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_json(
            dir.path(),
            serde_json::json!({
                "name": "ov", "num_classes": 1, "classes": ["a"],
                "entries": [{"id": "x", "path": "x.sslr", "label": 0}],
                "splits": {"pretrain": ["x"], "test": ["x"]}
            }),
        );
        assert!(matches!(load_manifest(p), Err(DatasetError::SplitOverlap { .. })));
    }

    #[test]
    fn read_sample_errors() {
        let dir = tempfile::tempdir().unwrap();
        let e = vec![ManifestEntry {
            id: "t".into(),
            path: "t.sslr".into(),
            label: Some(0),
        }];
        let m = DatasetManifest::new("r", dir.path(), vec!["a".into()], BandInfo::generic(3), e)
            .unwrap();
        assert!(matches!(m.read_sample("zzz"), Err(DatasetError::UnknownId(_))));

        let px = ndarray::Array3::<f32>::ones((3, 64, 64));
        let bytes = super::super::encode_raster(&px);
        fs::write(dir.path().join("t.sslr"), &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(m.read_sample("t"), Err(DatasetError::DecodeFailure { .. })));

        fs::write(dir.path().join("t.sslr"), &bytes).unwrap();
        let s = m.read_sample("t").unwrap();
        assert_eq!(s.shape(), (3, 64, 64));
        assert_eq!(s.label, Some(0));
        assert_eq!(s.class_name.as_deref(), Some("a"));

        let four = ndarray::Array3::<f32>::ones((4, 64, 64));
        fs::write(dir.path().join("t.sslr"), super::super::encode_raster(&four)).unwrap();
        assert!(matches!(
            m.read_sample("t"),
            Err(DatasetError::BandMismatch { expected: 3, found: 4, .. })
        ));
    }
}
