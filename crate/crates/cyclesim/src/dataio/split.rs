//! Patient-level hold-out splitting.
//!
//! Test patients are drawn first; their records never appear in train or
//! val. The remaining labeled records are split train/val by the requested
//! ratio (to within one record); remaining unlabeled records go to train,
//! where the GAN and the semi-supervised student consume them.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, DatasetManifest, ImageRecord};

/// A patient-disjoint train/val/test partition of a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub seed: u64,
    pub test_patients: BTreeSet<String>,
    pub train_records: Vec<ImageRecord>,
    pub val_records: Vec<ImageRecord>,
    pub test_records: Vec<ImageRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    seed: u64,
    test_patients: Vec<String>,
    train: Vec<PathBuf>,
    val: Vec<PathBuf>,
    test: Vec<PathBuf>,
}

impl SplitSpec {
    pub fn labeled_train(&self) -> Vec<&ImageRecord> {
        self.train_records
            .iter()
            .filter(|r| r.tissue.is_labeled())
            .collect()
    }

    pub fn unlabeled_train(&self) -> Vec<&ImageRecord> {
        self.train_records
            .iter()
            .filter(|r| !r.tissue.is_labeled())
            .collect()
    }

    /// Serializes the split as JSON (paths only).
    pub fn to_json(&self) -> Result<String, DataError> {
        let file = SplitFile {
            seed: self.seed,
            test_patients: self.test_patients.iter().cloned().collect(),
            train: self
                .train_records
                .iter()
                .map(|r| r.image_path.clone())
                .collect(),
            val: self
                .val_records
                .iter()
                .map(|r| r.image_path.clone())
                .collect(),
            test: self
                .test_records
                .iter()
                .map(|r| r.image_path.clone())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Rehydrates a split file against its manifest.
    pub fn load(path: &Path, manifest: &DatasetManifest) -> Result<SplitSpec, DataError> {
        let text = std::fs::read_to_string(path)?;
        let file: SplitFile = serde_json::from_str(&text)?;
        let lookup: std::collections::HashMap<&Path, &ImageRecord> = manifest
            .records
            .iter()
            .map(|r| (r.image_path.as_path(), r))
            .collect();
        let resolve = |paths: &[PathBuf]| -> Result<Vec<ImageRecord>, DataError> {
            paths
                .iter()
                .map(|p| {
                    lookup
                        .get(p.as_path())
                        .map(|r| (*r).clone())
                        .ok_or_else(|| DataError::UnknownSplitPath(p.clone()))
                })
                .collect()
        };
        Ok(SplitSpec {
            seed: file.seed,
            test_patients: file.test_patients.into_iter().collect(),
            train_records: resolve(&file.train)?,
            val_records: resolve(&file.val)?,
            test_records: resolve(&file.test)?,
        })
    }
}

/// Patient-level hold-out split.
///
/// `n_test_patients` are drawn at random (seeded); all their records become
/// the test set. Remaining labeled records are shuffled and divided
/// train/val at `ratio`; remaining unlabeled records join the train pool.
/// Pure function of `(manifest, n_test_patients, ratio, seed)`.
pub fn split_holdout(
    manifest: &DatasetManifest,
    n_test_patients: usize,
    ratio: f64,
    seed: u64,
) -> Result<SplitSpec, DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::RatioOutOfRange(ratio));
    }
    let patients = manifest.patient_ids();
    if patients.len() < n_test_patients {
        return Err(DataError::TooFewPatients {
            have: patients.len(),
            need: n_test_patients,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = patients;
    shuffled.shuffle(&mut rng);
    let test_patients: BTreeSet<String> = shuffled.into_iter().take(n_test_patients).collect();

    let mut test_records = Vec::new();
    let mut rest_labeled = Vec::new();
    let mut rest_unlabeled = Vec::new();
    for r in &manifest.records {
        if test_patients.contains(&r.patient_id) {
            test_records.push(r.clone());
        } else if r.tissue.is_labeled() {
            rest_labeled.push(r.clone());
        } else {
            rest_unlabeled.push(r.clone());
        }
    }

    rest_labeled.shuffle(&mut rng);
    let n_train = (ratio * rest_labeled.len() as f64).round() as usize;
    let val_records = rest_labeled.split_off(n_train.min(rest_labeled.len()));
    let mut train_records = rest_labeled;
    train_records.extend(rest_unlabeled);

    Ok(SplitSpec {
        seed,
        test_patients,
        train_records,
        val_records,
        test_records,
    })
}
