//! Teacher classifier, multi-input student, pseudo-labels, and the
//! supervised / semi-supervised training loops.

mod ablation;
mod loss;
mod model;
mod student;
mod teacher;

pub use ablation::{ablation_branch_run, AblationArm, AblationOutput};
pub use loss::cross_entropy;
pub use model::{
    BackboneId, ClassifierConfig, ClassifierModel, MultiInputClassifier, TripleBatch,
};
pub use student::{
    build_semisup_pool, pseudo_label, student_forward, student_predict, train_single_semisup,
    train_student_semisup, PoolSample, StudentTrainOutput,
};
pub use teacher::{evaluate_classifier, train_teacher, ClassifierHistory, HistoryRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{AugmentConfig, TissueClass};
use crate::par::Parallelism;

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("backbone {0:?} has no bundled weights in this build; use TOY or load an external feature extractor")]
    UnavailableBackbone(BackboneId),
    #[error("empty training pool")]
    EmptyPool,
    #[error("teacher model has not been trained or loaded from a checkpoint")]
    UntrainedTeacher,
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("{0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Gan(#[from] crate::gan::GanError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Weights(#[from] crate::nn::weights::WeightsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Four-class probability vector with its argmax decision.
///
/// Ties break by the fixed class order HGC < LGC < NTL < NST.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassPrediction {
    pub probs: [f64; 4],
    pub predicted: TissueClass,
}

impl ClassPrediction {
    pub fn from_probs(probs: [f64; 4]) -> Self {
        let mut best = 0;
        for i in 1..4 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        Self {
            probs,
            predicted: TissueClass::from_index(best),
        }
    }

    /// Probabilities are non-negative and sum to one within tolerance.
    pub fn is_normalized(&self) -> bool {
        self.probs.iter().all(|p| *p >= 0.0)
            && (self.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6
    }
}

/// Soft or hard target semantics for pseudo-labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PseudoMode {
    Soft,
    Hard,
}

/// Where a training target came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Teacher,
    GroundTruth,
}

/// A four-class training target with provenance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub probs: [f64; 4],
    pub mode: PseudoMode,
    pub source: LabelSource,
}

impl PseudoLabel {
    pub fn one_hot(class: TissueClass, source: LabelSource) -> Self {
        let mut probs = [0.0; 4];
        probs[class.index().expect("labeled class")] = 1.0;
        Self {
            probs,
            mode: PseudoMode::Hard,
            source,
        }
    }

    pub fn is_one_hot(&self) -> bool {
        self.probs.iter().filter(|p| **p == 1.0).count() == 1
            && self.probs.iter().filter(|p| **p == 0.0).count() == 3
    }

    pub fn is_normalized(&self) -> bool {
        self.probs.iter().all(|p| *p >= 0.0)
            && (self.probs.iter().sum::<f64>() - 1.0).abs() < 1e-6
    }
}

/// Supervised training knobs. Defaults mirror the published classifier
/// setup: learning rate 1e-5, batch size 32.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    /// Augmentation for training inputs (branch 1 only in student training).
    pub augment: Option<AugmentConfig>,
    /// Optional inverse-frequency class weighting; off by default.
    pub weight_by_class_freq: bool,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 32,
            epochs: 30,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            augment: None,
            weight_by_class_freq: false,
            parallelism: Parallelism::auto(),
        }
    }
}

impl ClassifierTrainConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.learning_rate > 0.0) {
            return Err(ClassifyError::InvalidConfig(
                "learning rate must be > 0".into(),
            ));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ClassifyError::InvalidConfig(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}
