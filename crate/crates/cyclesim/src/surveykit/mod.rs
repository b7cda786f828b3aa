//! Specialist-evaluation materials: image-pair manifests with hidden answer
//! keys, and scoring of returned response sheets.
//!
//! Two tasks exist. Task 1 (real vs fake): 20 same-domain pairs, one real
//! and one generated image each, 10 per domain; respondents name the real
//! side. Task 2 (tissue classification): 40 pairs, half real-only and half
//! containing one translated image, 10 per tissue class; respondents name
//! the class.
//!
//! Manifests never leak ground truth: images appear as anonymized tokens,
//! and the token-to-file mapping lives only in the key assets file.

mod gen;
mod score;

pub use gen::{
    gen_classification_task, gen_realfake_task, load_pairing_csv, ClassPairKind, PairingRow,
};
pub use score::{load_response_csv, score_responses, GroupStats, SurveyReport, TaskOneStats};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DomainTag, TissueClass};

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("pool too small: need {need} images for {what}, have {have}")]
    InsufficientPool {
        what: String,
        need: usize,
        have: usize,
    },
    #[error("response sheet references unknown item {0:?}")]
    UnknownItem(String),
    #[error("{0}")]
    Malformed(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which survey task a manifest belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TaskId {
    RealVsFake,
    TissueClassify,
}

impl std::fmt::Display for TaskId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskId::RealVsFake => "REAL_VS_FAKE",
            TaskId::TissueClassify => "TISSUE_CLASSIFY",
        })
    }
}

/// One displayed pair, by anonymized tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub item_id: String,
    pub left_token: String,
    pub right_token: String,
}

/// Hidden truth for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ItemKey {
    /// Task 1: which side is the real image, and which domain the pair
    /// belongs to (the translation direction is the opposite generator).
    RealSide { side: Side, domain: DomainTag },
    /// Task 2: the pair kind and the true tissue class.
    Classify {
        pair_kind: ClassPairKind,
        class: TissueClass,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

impl std::str::FromStr for Side {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Side::Left),
            "right" => Ok(Side::Right),
            other => Err(format!("expected left|right, got {other:?}")),
        }
    }
}

/// A generated survey: public manifest, hidden key, token-to-file assets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurveyManifest {
    pub task_id: TaskId,
    pub seed: u64,
    pub items: Vec<SurveyItem>,
    /// item_id -> truth; serialized separately from the manifest.
    pub key: BTreeMap<String, ItemKey>,
    /// token -> original file path; serialized into `key_assets.json`.
    pub assets: BTreeMap<String, PathBuf>,
}

impl SurveyManifest {
    /// Writes `manifest.csv`, `key.csv`, `key_assets.json` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(), SurveyError> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))?;
        manifest.write_record(["item_id", "task", "left_token", "right_token"])?;
        for item in &self.items {
            manifest.write_record([
                item.item_id.as_str(),
                &self.task_id.to_string(),
                item.left_token.as_str(),
                item.right_token.as_str(),
            ])?;
        }
        manifest.flush()?;

        let mut key = csv::Writer::from_path(dir.join("key.csv"))?;
        match self.task_id {
            TaskId::RealVsFake => {
                key.write_record(["item_id", "truth"])?;
                for item in &self.items {
                    if let Some(ItemKey::RealSide { side, .. }) = self.key.get(&item.item_id) {
                        key.write_record([item.item_id.as_str(), &side.to_string()])?;
                    }
                }
            }
            TaskId::TissueClassify => {
                key.write_record(["item_id", "pair_type", "tissue_class"])?;
                for item in &self.items {
                    if let Some(ItemKey::Classify { pair_kind, class }) =
                        self.key.get(&item.item_id)
                    {
                        key.write_record([
                            item.item_id.as_str(),
                            &pair_kind.to_string(),
                            &class.to_string(),
                        ])?;
                    }
                }
            }
        }
        key.flush()?;

        std::fs::write(
            dir.join("key_assets.json"),
            serde_json::to_string_pretty(&self.assets)?,
        )?;
        Ok(())
    }

    /// The key reformatted as a perfect response sheet (oracle respondent).
    pub fn key_as_sheet(&self, respondent_id: &str, group: RespondentGroup) -> ResponseSheet {
        let answers = self
            .items
            .iter()
            .map(|item| {
                let answer = match &self.key[&item.item_id] {
                    ItemKey::RealSide { side, .. } => side.to_string(),
                    ItemKey::Classify { class, .. } => class.to_string(),
                };
                (item.item_id.clone(), answer)
            })
            .collect();
        ResponseSheet {
            respondent_id: respondent_id.to_string(),
            group,
            answers,
        }
    }
}

/// Expert surgeon or resident.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RespondentGroup {
    Es,
    Re,
}

impl std::fmt::Display for RespondentGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RespondentGroup::Es => "ES",
            RespondentGroup::Re => "RE",
        })
    }
}

impl std::str::FromStr for RespondentGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ES" => Ok(RespondentGroup::Es),
            "RE" => Ok(RespondentGroup::Re),
            other => Err(format!("expected ES|RE, got {other:?}")),
        }
    }
}

/// One respondent's answers, one per item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseSheet {
    pub respondent_id: String,
    pub group: RespondentGroup,
    pub answers: BTreeMap<String, String>,
}
