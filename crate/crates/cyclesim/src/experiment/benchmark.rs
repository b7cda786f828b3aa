//! The synthetic four-class two-domain benchmark as consumed by presets:
//! labeled domain-A pools, an unlabeled domain-B pool, and a labeled
//! two-domain test set. Everything is held in the GAN's symmetric range.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::dataio::{
    load_manifest, save_manifest, save_png, CompositionId, DatasetManifest, DomainTag,
    ImageRecord, ImageTensor, SourceDataset, TissueClass, ValueRange,
};
use crate::seed::SeedStream;
use crate::synth::{four_class_benchmark, BenchmarkConfig};

use super::ExperimentError;

#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub train_labeled_a: Vec<(ImageTensor, TissueClass)>,
    pub val_labeled_a: Vec<(ImageTensor, TissueClass)>,
    pub train_unlabeled_b: Vec<ImageTensor>,
    pub test: Vec<(ImageTensor, TissueClass, DomainTag)>,
    pub size: usize,
}

impl BenchmarkData {
    /// Generates the benchmark in memory; labeled records are split
    /// train/val at the published 75/25 ratio.
    pub fn synthetic(cfg: BenchmarkConfig, seed: u64) -> Self {
        let bench = four_class_benchmark(cfg, seed);
        let stream = SeedStream::new(seed);
        let mut labeled: Vec<(ImageTensor, TissueClass)> = bench
            .train_labeled_a
            .into_iter()
            .map(|(im, c)| (im.convert_range(ValueRange::Symmetric), c))
            .collect();
        labeled.shuffle(&mut stream.rng("train-val-split"));
        let n_train = ((labeled.len() as f64) * 0.75).round() as usize;
        let val_labeled_a = labeled.split_off(n_train.min(labeled.len()));
        let train_unlabeled_b = bench
            .train_unlabeled_b
            .into_iter()
            .map(|im| im.convert_range(ValueRange::Symmetric))
            .collect();
        let test = bench
            .test
            .into_iter()
            .map(|(im, c, d)| (im.convert_range(ValueRange::Symmetric), c, d))
            .collect();
        Self {
            train_labeled_a: labeled,
            val_labeled_a,
            train_unlabeled_b,
            test,
            size: cfg.size,
        }
    }

    /// The GAN training pools: labeled-A originals and the unlabeled-B pool.
    pub fn gan_pools(&self) -> (Vec<ImageTensor>, Vec<ImageTensor>) {
        (
            self.train_labeled_a.iter().map(|(im, _)| im.clone()).collect(),
            self.train_unlabeled_b.clone(),
        )
    }

    /// Labeled samples tagged with their domain, as the student consumes them.
    pub fn labeled_with_domain(&self) -> Vec<(ImageTensor, DomainTag, TissueClass)> {
        self.train_labeled_a
            .iter()
            .map(|(im, c)| (im.clone(), DomainTag::Wli, *c))
            .collect()
    }

    pub fn val_with_domain(&self) -> Vec<(ImageTensor, DomainTag, TissueClass)> {
        self.val_labeled_a
            .iter()
            .map(|(im, c)| (im.clone(), DomainTag::Wli, *c))
            .collect()
    }

    pub fn test_with_domain(&self) -> Vec<(ImageTensor, DomainTag, TissueClass)> {
        self.test
            .iter()
            .map(|(im, c, d)| (im.clone(), *d, *c))
            .collect()
    }

    pub fn unlabeled_with_domain(&self) -> Vec<(ImageTensor, DomainTag)> {
        self.train_unlabeled_b
            .iter()
            .map(|im| (im.clone(), DomainTag::Nbi))
            .collect()
    }

    /// Writes PNGs plus `train.csv`, `val.csv`, `test.csv` manifests.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), ExperimentError> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;
        let write_set = |name: &str,
                             samples: Vec<(&ImageTensor, String, DomainTag, TissueClass)>|
         -> Result<(), ExperimentError> {
            let mut records = Vec::new();
            for (img, stem, domain, tissue) in samples {
                let path = images.join(format!("{stem}.png"));
                save_png(img, &path)?;
                records.push(ImageRecord {
                    image_path: path,
                    patient_id: stem.clone(),
                    domain,
                    tissue,
                    source_dataset: SourceDataset::Synthetic,
                });
            }
            let manifest = DatasetManifest::new(records, CompositionId::Custom)?;
            save_manifest(&manifest, &dir.join(name))?;
            Ok(())
        };

        write_set(
            "train.csv",
            self.train_labeled_a
                .iter()
                .enumerate()
                .map(|(i, (im, c))| (im, format!("train_a_{i:03}"), DomainTag::Wli, *c))
                .chain(self.train_unlabeled_b.iter().enumerate().map(|(i, im)| {
                    (
                        im,
                        format!("train_b_{i:03}"),
                        DomainTag::Nbi,
                        TissueClass::Unlabeled,
                    )
                }))
                .collect(),
        )?;
        write_set(
            "val.csv",
            self.val_labeled_a
                .iter()
                .enumerate()
                .map(|(i, (im, c))| (im, format!("val_a_{i:03}"), DomainTag::Wli, *c))
                .collect(),
        )?;
        write_set(
            "test.csv",
            self.test
                .iter()
                .enumerate()
                .map(|(i, (im, c, d))| (im, format!("test_{i:03}"), *d, *c))
                .collect(),
        )?;
        std::fs::write(
            dir.join("meta.json"),
            serde_json::to_string_pretty(&serde_json::json!({ "size": self.size }))?,
        )?;
        Ok(())
    }

    /// Loads a benchmark directory written by [`Self::write_to_dir`].
    pub fn load_from_dir(dir: &Path) -> Result<Self, ExperimentError> {
        let meta_path = dir.join("meta.json");
        if !meta_path.exists() {
            return Err(ExperimentError::IncompleteBenchmark("meta.json".into()));
        }
        let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
        let size = meta["size"].as_u64().unwrap_or(32) as usize;
        let load_set = |name: &str| -> Result<DatasetManifest, ExperimentError> {
            let path = dir.join(name);
            if !path.exists() {
                return Err(ExperimentError::IncompleteBenchmark(name.into()));
            }
            Ok(load_manifest(&path)?)
        };
        let train = load_set("train.csv")?;
        let val = load_set("val.csv")?;
        let test = load_set("test.csv")?;
        let load = |r: &ImageRecord| -> Result<ImageTensor, ExperimentError> {
            Ok(crate::dataio::load_image(
                r,
                (size, size),
                ValueRange::Symmetric,
            )?)
        };
        let mut train_labeled_a = Vec::new();
        let mut train_unlabeled_b = Vec::new();
        for r in &train.records {
            if r.tissue.is_labeled() {
                train_labeled_a.push((load(r)?, r.tissue));
            } else {
                train_unlabeled_b.push(load(r)?);
            }
        }
        let mut val_labeled_a = Vec::new();
        for r in &val.records {
            val_labeled_a.push((load(r)?, r.tissue));
        }
        let mut test_samples = Vec::new();
        for r in &test.records {
            test_samples.push((load(r)?, r.tissue, r.domain));
        }
        Ok(Self {
            train_labeled_a,
            val_labeled_a,
            train_unlabeled_b,
            test: test_samples,
            size,
        })
    }
}
