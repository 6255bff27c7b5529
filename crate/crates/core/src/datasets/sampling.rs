//! Deterministic splits, few-shot draws, fraction subsampling and mixing.

use std::collections::HashSet;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetManifest, ManifestEntry, Splits};
use crate::rng;

/// Test-split request. The same spec on the same manifest always yields the same split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
    #[serde(default = "default_true")]
    pub stratified: bool,
    /// Pretrain on every entry, test images included.
    #[serde(default)]
    pub pretrain_includes_test: bool,
}

fn default_true() -> bool {
    true
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_fraction: 0.25,
            seed: 0,
            stratified: true,
            pretrain_includes_test: false,
        }
    }
}

/// Rounds to the nearest integer, ties away from zero.
pub fn round_half_away(x: f64) -> usize {
    x.round().max(0.0) as usize
}

/// Distributes `total` over groups proportionally to `sizes` by largest remainder.
fn largest_remainder(sizes: &[usize], fraction: f64, total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = sizes.iter().map(|&n| n as f64 * fraction).collect();
    let mut counts: Vec<usize> = quotas
        .iter()
        .zip(sizes)
        .map(|(q, &n)| (q.floor() as usize).min(n))
        .collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &g in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if counts[g] < sizes[g] {
            counts[g] += 1;
            remaining -= 1;
        }
    }
    counts
}

fn by_class(manifest: &DatasetManifest, ids: &[String]) -> Vec<Vec<String>> {
    let mut groups = vec![Vec::new(); manifest.num_classes()];
    for id in ids {
        if let Some(label) = manifest.label_of(id) {
            groups[label].push(id.clone());
        }
    }
    groups
}

/// Assigns test and pretrain tags. Finetune is left empty for [`few_shot_sample`].
pub fn split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<DatasetManifest, DatasetError> {
    if !(spec.test_fraction > 0.0 && spec.test_fraction < 1.0) {
        return Err(DatasetError::Invalid(format!(
            "test_fraction {} outside (0, 1)",
            spec.test_fraction
        )));
    }
    let all: Vec<String> = manifest.entries().iter().map(|e| e.id.clone()).collect();
    let total = round_half_away(spec.test_fraction * all.len() as f64);
    let mut test = Vec::with_capacity(total);
    if spec.stratified {
        if let Some(e) = manifest.entries().iter().find(|e| e.label.is_none()) {
            return Err(DatasetError::UnlabeledStratified(e.id.clone()));
        }
        let groups = by_class(manifest, &all);
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        let counts = largest_remainder(&sizes, spec.test_fraction, total);
        for (class, (mut ids, count)) in groups.into_iter().zip(counts).enumerate() {
            ids.shuffle(&mut rng::rng_str(rng::derive(spec.seed, &[class as u64]), "split"));
            test.extend(ids.into_iter().take(count));
        }
    } else {
        let mut ids = all.clone();
        ids.shuffle(&mut rng::rng_str(spec.seed, "split"));
        test.extend(ids.into_iter().take(total));
    }
    let test_set: HashSet<&String> = test.iter().collect();
    let pretrain: Vec<String> = all.iter().filter(|id| !test_set.contains(id)).cloned().collect();
    let test = manifest.order_ids(test);
    Ok(manifest.with_splits(
        Splits {
            pretrain,
            finetune: Vec::new(),
            test,
        },
        spec.pretrain_includes_test,
    ))
}

/// Applies `spec` to a manifest that carries no split tags yet; tagged manifests pass through.
pub fn ensure_split(manifest: DatasetManifest, spec: &SplitSpec) -> Result<DatasetManifest, DatasetError> {
    let s = manifest.splits();
    if s.pretrain.is_empty() && s.finetune.is_empty() && s.test.is_empty() {
        split(&manifest, spec)
    } else {
        Ok(manifest)
    }
}

/// Draws exactly `k` labeled, non-test samples per class into the finetune split.
///
/// Drawn samples leave the pretrain tag so tags stay a partition.
pub fn few_shot_sample(
    manifest: &DatasetManifest,
    k: usize,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    let splits = manifest.splits();
    let test: HashSet<&String> = splits.test.iter().collect();
    let eligible: Vec<String> = manifest
        .entries()
        .iter()
        .filter(|e| e.label.is_some() && !test.contains(&e.id))
        .map(|e| e.id.clone())
        .collect();
    let mut chosen = Vec::with_capacity(k * manifest.num_classes());
    for (class, mut ids) in by_class(manifest, &eligible).into_iter().enumerate() {
        if ids.len() < k {
            return Err(DatasetError::InsufficientSamples {
                class,
                available: ids.len(),
                requested: k,
            });
        }
        ids.shuffle(&mut rng::rng_str(rng::derive(seed, &[class as u64]), "few-shot"));
        chosen.extend(ids.into_iter().take(k));
    }
    let chosen_set: HashSet<&String> = chosen.iter().collect();
    let pretrain: Vec<String> = splits
        .pretrain
        .iter()
        .chain(&splits.finetune)
        .filter(|id| !chosen_set.contains(id))
        .cloned()
        .collect();
    let pretrain = manifest.order_ids(pretrain);
    let finetune = manifest.order_ids(chosen);
    Ok(manifest.with_splits(
        Splits {
            pretrain,
            finetune,
            test: splits.test.clone(),
        },
        manifest.pretrain_includes_test(),
    ))
}

/// Keeps `round(fraction × |pretrain|)` pretrain samples drawn uniformly without replacement.
pub fn subsample_fraction(
    manifest: &DatasetManifest,
    fraction: f64,
    seed: u64,
) -> Result<DatasetManifest, DatasetError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DatasetError::FractionOutOfRange(fraction));
    }
    if manifest.pretrain_includes_test() {
        return Err(DatasetError::Invalid(
            "cannot subsample a manifest whose pretraining pool includes test samples".into(),
        ));
    }
    let splits = manifest.splits();
    let keep = round_half_away(fraction * splits.pretrain.len() as f64);
    let mut ids = splits.pretrain.clone();
    ids.shuffle(&mut rng::rng_str(seed, "fraction"));
    ids.truncate(keep);
    Ok(manifest.with_splits(
        Splits {
            pretrain: manifest.order_ids(ids),
            finetune: splits.finetune.clone(),
            test: splits.test.clone(),
        },
        false,
    ))
}

/// Unions the pretraining pools of several datasets into one unlabeled manifest.
///
/// Ids become `<source name>/<id>` and paths are resolved against each source root.
pub fn mix(manifests: &[&DatasetManifest]) -> Result<DatasetManifest, DatasetError> {
    if manifests.len() < 2 {
        return Err(DatasetError::Invalid("mixing needs at least two manifests".into()));
    }
    let mut names = HashSet::new();
    for m in manifests {
        if !names.insert(m.name()) {
            return Err(DatasetError::DuplicateSource(m.name().to_string()));
        }
    }
    let first = manifests[0];
    for m in &manifests[1..] {
        if let (Some(a), Some(b)) = (first.num_bands(), m.num_bands()) {
            if a != b {
                return Err(DatasetError::MixBandMismatch { first: a, other: b });
            }
        }
    }
    let bands = manifests
        .iter()
        .find(|m| m.num_bands().is_some())
        .map(|m| m.bands().to_vec())
        .unwrap_or_default();
    let mut entries = Vec::new();
    for m in manifests {
        let root = std::path::absolute(m.root()).map_err(|e| DatasetError::io(m.root(), e))?;
        for id in m.pretrain_pool() {
            let e = m.entry(&id).expect("pool ids are manifest entries");
            entries.push(ManifestEntry {
                id: format!("{}/{}", m.name(), e.id),
                path: root.join(&e.path),
                label: None,
            });
        }
    }
    let name = manifests.iter().map(|m| m.name()).collect::<Vec<_>>().join("+");
    let pretrain = entries.iter().map(|e| e.id.clone()).collect();
    let mixed = DatasetManifest::new(name, PathBuf::new(), Vec::new(), bands, entries)?;
    Ok(mixed.with_splits(
        Splits {
            pretrain,
            ..Splits::default()
        },
        false,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::BandInfo;

    fn labeled(name: &str, per_class: &[usize], bands: usize) -> DatasetManifest {
        let mut entries = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                entries.push(ManifestEntry {
                    id: format!("c{c}_{i:05}"),
                    path: format!("{c}_{i}.sslr").into(),
                    label: Some(c),
                });
            }
        }
        let classes = (0..per_class.len()).map(|c| format!("class{c}")).collect();
        DatasetManifest::new(name, "/data", classes, BandInfo::generic(bands), entries).unwrap()
    }

    fn spec(f: f64, seed: u64) -> SplitSpec {
        SplitSpec {
            test_fraction: f,
            seed,
            ..SplitSpec::default()
        }
    }

    #[test]
    fn stratified_balanced_split() {
        let m = labeled("d", &[200; 4], 3);
        let s = split(&m, &spec(0.25, 7)).unwrap();
        assert_eq!(s.splits().test.len(), 200);
        assert_eq!(s.splits().pretrain.len(), 600);
        for c in 0..4 {
            let n = s.splits().test.iter().filter(|id| s.label_of(id) == Some(c)).count();
            assert_eq!(n, 50);
        }
        assert_eq!(split(&m, &spec(0.25, 7)).unwrap(), s);
        assert_ne!(split(&m, &spec(0.25, 8)).unwrap().splits(), s.splits());
    }

    #[test]
    fn eurosat_sized_split() {
        let m = labeled("eurosat", &[2700; 10], 13);
        let s = split(&m, &spec(0.2, 1)).unwrap();
        assert_eq!(s.splits().test.len(), 5400);
    }

    #[test]
    fn unbalanced_split_stays_within_one_of_proportion() {
        let sizes = [13, 7, 29, 3, 50];
        let m = labeled("u", &sizes, 1);
        let s = split(&m, &spec(0.3, 3)).unwrap();
        let total: usize = sizes.iter().sum();
        assert_eq!(s.splits().test.len(), round_half_away(0.3 * total as f64));
        for (c, &n) in sizes.iter().enumerate() {
            let got = s.splits().test.iter().filter(|id| s.label_of(id) == Some(c)).count();
            assert!((got as f64 - 0.3 * n as f64).abs() <= 1.0, "class {c}: {got}");
        }
    }

    #[test]
    fn stratified_needs_labels() {
        let entries = vec![ManifestEntry {
            id: "u".into(),
            path: "u.sslr".into(),
            label: None,
        }];
        let m = DatasetManifest::new("n", "/", vec!["a".into()], vec![], entries).unwrap();
        assert!(matches!(split(&m, &spec(0.5, 0)), Err(DatasetError::UnlabeledStratified(_))));
        let unstrat = SplitSpec {
            stratified: false,
            ..spec(0.5, 0)
        };
        assert!(split(&m, &unstrat).is_ok());
    }

    #[test]
    fn few_shot_counts_and_hygiene() {
        let m = split(&labeled("d", &[200; 4], 3), &spec(0.25, 7)).unwrap();
        let f = few_shot_sample(&m, 5, 1).unwrap();
        assert_eq!(f.splits().finetune.len(), 20);
        for c in 0..4 {
            assert_eq!(f.splits().finetune.iter().filter(|id| f.label_of(id) == Some(c)).count(), 5);
        }
        let test: HashSet<_> = f.splits().test.iter().collect();
        assert!(f.splits().finetune.iter().all(|id| !test.contains(id)));
        assert_eq!(f.splits().pretrain.len(), 580);
        assert_eq!(few_shot_sample(&m, 5, 1).unwrap(), f);

        assert!(few_shot_sample(&m, 0, 1).unwrap().splits().finetune.is_empty());
        assert!(matches!(
            few_shot_sample(&m, 999, 1),
            Err(DatasetError::InsufficientSamples { requested: 999, .. })
        ));
        // redrawing from an already few-shot manifest returns old picks to pretrain
        let again = few_shot_sample(&f, 20, 2).unwrap();
        assert_eq!(again.splits().finetune.len(), 80);
        assert_eq!(again.splits().pretrain.len(), 520);
    }

    #[test]
    fn fraction_subsampling() {
        let mut m = labeled("nr", &[560; 45], 3);
        m = split(&m, &spec(0.2, 0)).unwrap();
        assert_eq!(m.splits().pretrain.len(), 20160);
        let tenth = subsample_fraction(&m, 0.1, 4).unwrap();
        assert_eq!(tenth.splits().pretrain.len(), 2016);
        assert_eq!(subsample_fraction(&m, 1.0, 4).unwrap().splits(), m.splits());
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                subsample_fraction(&m, bad, 0),
                Err(DatasetError::FractionOutOfRange(_))
            ));
        }
    }

    #[test]
    fn fraction_matches_reported_counts() {
        let m = labeled("nr", &[25_200], 3);
        let m = m.with_splits(
            Splits {
                pretrain: m.entries().iter().map(|e| e.id.clone()).collect(),
                ..Splits::default()
            },
            false,
        );
        assert_eq!(subsample_fraction(&m, 0.1, 0).unwrap().splits().pretrain.len(), 2520);
        let e = labeled("eurosat", &[21_600], 13);
        let e = e.with_splits(
            Splits {
                pretrain: e.entries().iter().map(|x| x.id.clone()).collect(),
                ..Splits::default()
            },
            false,
        );
        assert_eq!(subsample_fraction(&e, 0.5, 0).unwrap().splits().pretrain.len(), 10_800);
    }

    fn all_pretrain(name: &str, n: usize, bands: usize) -> DatasetManifest {
        let m = labeled(name, &[n], bands);
        let ids = m.entries().iter().map(|e| e.id.clone()).collect();
        m.with_splits(
            Splits {
                pretrain: ids,
                ..Splits::default()
            },
            false,
        )
    }

    #[test]
    fn mixing_cardinality_and_namespacing() {
        let aid = all_pretrain("aid", 8000, 3);
        let nr = all_pretrain("nr", 25_200, 3);
        let mixed = mix(&[&aid, &nr]).unwrap();
        assert_eq!(mixed.splits().pretrain.len(), 33_200);
        assert!(mixed.entries().iter().all(|e| e.label.is_none()));
        assert!(mixed.entry("aid/c0_00000").is_some());

        let (a, b, c) = (all_pretrain("a", 100, 3), all_pretrain("b", 200, 3), all_pretrain("c", 300, 3));
        assert_eq!(mix(&[&a, &b, &c]).unwrap().pretrain_pool().len(), 600);

        assert!(matches!(mix(&[&a, &a]), Err(DatasetError::DuplicateSource(_))));
        assert!(mix(&[&a]).is_err());
        let thirteen = all_pretrain("e", 10, 13);
        assert!(matches!(mix(&[&a, &thirteen]), Err(DatasetError::MixBandMismatch { .. })));
    }

    #[test]
    fn pretrain_includes_test_pool() {
        let m = labeled("d", &[10; 2], 3);
        let s = split(
            &m,
            &SplitSpec {
                pretrain_includes_test: true,
                ..spec(0.5, 0)
            },
        )
        .unwrap();
        assert_eq!(s.splits().pretrain.len(), 10);
        assert_eq!(s.pretrain_pool().len(), 20);
        assert!(subsample_fraction(&s, 0.5, 0).is_err());
    }
}
