//! Dataset manifests, patient-level splits, GAN dataset composition, image
//! loading and training-time augmentation.

mod augment;
mod compose;
mod image;
mod manifest;
mod split;

pub use augment::{augment, AugmentConfig};
pub use compose::{compose_gan_dataset, table_reference_counts, CompositionReference};
pub use image::{
    batch_nchw, load_image, load_image_from_path, save_png, unbatch_nchw, ImageTensor, ValueRange,
};
pub use manifest::{load_manifest, save_manifest};
pub use split::{split_holdout, SplitSpec};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("manifest not found: {0}")]
    MissingFile(PathBuf),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    MalformedRow { line: u64, msg: String },
    #[error("line {line}: unknown {field} token {value:?}")]
    UnknownToken {
        line: u64,
        field: &'static str,
        value: String,
    },
    #[error("manifest header must be {expected:?}, found {found:?}")]
    BadHeader { expected: String, found: String },
    #[error("duplicate image path: {0}")]
    DuplicatePath(PathBuf),
    #[error("manifest has {have} distinct patients, {need} requested for test")]
    TooFewPatients { have: usize, need: usize },
    #[error("train/val ratio must lie in (0, 1), got {0}")]
    RatioOutOfRange(f64),
    #[error("cannot decode image {path}: {msg}")]
    ImageDecode { path: PathBuf, msg: String },
    #[error("image has zero area: {0}")]
    ZeroArea(PathBuf),
    #[error("crop {crop:?} larger than image {image:?}")]
    CropTooLarge {
        crop: (usize, usize),
        image: (usize, usize),
    },
    #[error("composition {composition} requires records from {missing}, none found")]
    MissingPart { composition: String, missing: String },
    #[error("split file references unknown image path: {0}")]
    UnknownSplitPath(PathBuf),
}

/// Imaging domain of a record. Exactly two domains exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DomainTag {
    #[serde(rename = "WLI")]
    Wli,
    #[serde(rename = "NBI")]
    Nbi,
}

impl DomainTag {
    pub fn opposite(self) -> Self {
        match self {
            DomainTag::Wli => DomainTag::Nbi,
            DomainTag::Nbi => DomainTag::Wli,
        }
    }

    pub const ALL: [DomainTag; 2] = [DomainTag::Wli, DomainTag::Nbi];
}

impl fmt::Display for DomainTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DomainTag::Wli => "WLI",
            DomainTag::Nbi => "NBI",
        })
    }
}

impl FromStr for DomainTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "WLI" => Ok(DomainTag::Wli),
            "NBI" => Ok(DomainTag::Nbi),
            other => Err(format!("unknown domain {other:?}")),
        }
    }
}

/// Tissue class label. `Unlabeled` is reserved for NBI records and external
/// GAN-only corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TissueClass {
    #[serde(rename = "HGC")]
    Hgc,
    #[serde(rename = "LGC")]
    Lgc,
    #[serde(rename = "NTL")]
    Ntl,
    #[serde(rename = "NST")]
    Nst,
    #[serde(rename = "UNLABELED")]
    Unlabeled,
}

impl TissueClass {
    /// The four real classes in their fixed tie-break order.
    pub const CLASSES: [TissueClass; 4] = [
        TissueClass::Hgc,
        TissueClass::Lgc,
        TissueClass::Ntl,
        TissueClass::Nst,
    ];

    /// Index into [`Self::CLASSES`]; `None` for `Unlabeled`.
    pub fn index(self) -> Option<usize> {
        Self::CLASSES.iter().position(|&c| c == self)
    }

    pub fn from_index(i: usize) -> TissueClass {
        Self::CLASSES[i]
    }

    pub fn is_labeled(self) -> bool {
        self != TissueClass::Unlabeled
    }
}

impl fmt::Display for TissueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TissueClass::Hgc => "HGC",
            TissueClass::Lgc => "LGC",
            TissueClass::Ntl => "NTL",
            TissueClass::Nst => "NST",
            TissueClass::Unlabeled => "UNLABELED",
        })
    }
}

impl FromStr for TissueClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "HGC" => Ok(TissueClass::Hgc),
            "LGC" => Ok(TissueClass::Lgc),
            "NTL" => Ok(TissueClass::Ntl),
            "NST" => Ok(TissueClass::Nst),
            "UNLABELED" => Ok(TissueClass::Unlabeled),
            other => Err(format!("unknown tissue class {other:?}")),
        }
    }
}

/// Originating corpus of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SourceDataset {
    #[serde(rename = "D_A")]
    DA,
    #[serde(rename = "D_B")]
    DB,
    #[serde(rename = "D_C")]
    DC,
    #[serde(rename = "D_D")]
    DD,
    #[serde(rename = "SYNTHETIC")]
    Synthetic,
}

impl SourceDataset {
    /// External GAN-only corpora may carry unlabeled records in any domain.
    pub fn is_external(self) -> bool {
        !matches!(self, SourceDataset::DA)
    }
}

impl fmt::Display for SourceDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceDataset::DA => "D_A",
            SourceDataset::DB => "D_B",
            SourceDataset::DC => "D_C",
            SourceDataset::DD => "D_D",
            SourceDataset::Synthetic => "SYNTHETIC",
        })
    }
}

impl FromStr for SourceDataset {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D_A" => Ok(SourceDataset::DA),
            "D_B" => Ok(SourceDataset::DB),
            "D_C" => Ok(SourceDataset::DC),
            "D_D" => Ok(SourceDataset::DD),
            "SYNTHETIC" => Ok(SourceDataset::Synthetic),
            other => Err(format!("unknown source dataset {other:?}")),
        }
    }
}

/// One image with its provenance and label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_path: PathBuf,
    pub patient_id: String,
    pub domain: DomainTag,
    pub tissue: TissueClass,
    pub source_dataset: SourceDataset,
}

/// GAN training dataset composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompositionId {
    D1,
    D2,
    D3,
    Custom,
}

impl fmt::Display for CompositionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompositionId::D1 => "D1",
            CompositionId::D2 => "D2",
            CompositionId::D3 => "D3",
            CompositionId::Custom => "CUSTOM",
        })
    }
}

/// An ordered collection of records with no duplicate paths.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub records: Vec<ImageRecord>,
    pub composition_id: CompositionId,
}

impl DatasetManifest {
    pub fn new(
        records: Vec<ImageRecord>,
        composition_id: CompositionId,
    ) -> Result<Self, DataError> {
        let mut seen = std::collections::HashSet::new();
        for r in &records {
            if !seen.insert(r.image_path.clone()) {
                return Err(DataError::DuplicatePath(r.image_path.clone()));
            }
        }
        Ok(Self {
            records,
            composition_id,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count_domain(&self, domain: DomainTag) -> usize {
        self.records.iter().filter(|r| r.domain == domain).count()
    }

    pub fn count_tissue(&self, tissue: TissueClass) -> usize {
        self.records.iter().filter(|r| r.tissue == tissue).count()
    }

    pub fn count(&self, domain: DomainTag, tissue: TissueClass) -> usize {
        self.records
            .iter()
            .filter(|r| r.domain == domain && r.tissue == tissue)
            .count()
    }

    /// Per-(domain, tissue) counts, recorded in run metadata.
    pub fn count_table(&self) -> BTreeMap<(DomainTag, TissueClass), usize> {
        let mut table = BTreeMap::new();
        for r in &self.records {
            *table.entry((r.domain, r.tissue)).or_insert(0) += 1;
        }
        table
    }

    /// Distinct non-empty patient ids, sorted.
    pub fn patient_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .records
            .iter()
            .filter(|r| !r.patient_id.is_empty())
            .map(|r| r.patient_id.clone())
            .collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

#[cfg(test)]
pub(crate) fn test_record(
    path: &str,
    patient: &str,
    domain: DomainTag,
    tissue: TissueClass,
) -> ImageRecord {
    ImageRecord {
        image_path: PathBuf::from(path),
        patient_id: patient.to_string(),
        domain,
        tissue,
        source_dataset: SourceDataset::DA,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_paths_rejected() {
        let recs = vec![
            test_record("a.png", "p1", DomainTag::Wli, TissueClass::Hgc),
            test_record("a.png", "p2", DomainTag::Nbi, TissueClass::Lgc),
        ];
        assert!(matches!(
            DatasetManifest::new(recs, CompositionId::Custom),
            Err(DataError::DuplicatePath(_))
        ));
    }

    #[test]
    fn class_order_is_fixed() {
        assert_eq!(TissueClass::Hgc.index(), Some(0));
        assert_eq!(TissueClass::Nst.index(), Some(3));
        assert_eq!(TissueClass::Unlabeled.index(), None);
        assert_eq!(TissueClass::from_index(1), TissueClass::Lgc);
    }

    #[test]
    fn domain_round_trips() {
        for d in DomainTag::ALL {
            assert_eq!(d.to_string().parse::<DomainTag>().unwrap(), d);
            assert_eq!(d.opposite().opposite(), d);
        }
    }
}
