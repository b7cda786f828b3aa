//! The published experiment families as runnable presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::{
    ablation_branch_run, train_single_semisup, train_student_semisup, AblationArm,
    ClassPrediction, ClassifierConfig, ClassifierModel, ClassifierTrainConfig,
    MultiInputClassifier, PseudoMode,
};
use crate::dataio::TissueClass;
use crate::evaluate::{per_domain_report, PerDomainReports};
use crate::gan::GanModel;
use crate::seed::SeedStream;

use super::{BenchmarkData, ExperimentError};

/// One row family of the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentPreset {
    /// Teacher backbone alone (no translation, no unlabeled data).
    Baseline,
    /// Single branch consuming translations, fully supervised.
    CsiganB2,
    /// Single branch consuming reconstructions, fully supervised.
    CsiganB3,
    /// Full three-branch classifier, fully supervised.
    CsiganFs,
    /// Teacher architecture trained semi-supervised, no translation.
    BaselineSemisup,
    /// Full three-branch classifier trained semi-supervised.
    Secsigan,
}

impl ExperimentPreset {
    pub const ALL: [ExperimentPreset; 6] = [
        ExperimentPreset::Baseline,
        ExperimentPreset::CsiganB2,
        ExperimentPreset::CsiganB3,
        ExperimentPreset::CsiganFs,
        ExperimentPreset::BaselineSemisup,
        ExperimentPreset::Secsigan,
    ];

    /// Whether the preset consumes GAN translations.
    pub fn needs_gan(&self) -> bool {
        !matches!(
            self,
            ExperimentPreset::Baseline | ExperimentPreset::BaselineSemisup
        )
    }

    /// Whether the preset consumes the unlabeled pool via pseudo-labels.
    pub fn needs_teacher(&self) -> bool {
        matches!(
            self,
            ExperimentPreset::BaselineSemisup | ExperimentPreset::Secsigan
        )
    }
}

impl fmt::Display for ExperimentPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentPreset::Baseline => "baseline",
            ExperimentPreset::CsiganB2 => "csigan_b2",
            ExperimentPreset::CsiganB3 => "csigan_b3",
            ExperimentPreset::CsiganFs => "csigan_fs",
            ExperimentPreset::BaselineSemisup => "baseline_semisup",
            ExperimentPreset::Secsigan => "secsigan",
        })
    }
}

impl FromStr for ExperimentPreset {
    type Err = ExperimentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ExperimentPreset::Baseline),
            "csigan_b2" => Ok(ExperimentPreset::CsiganB2),
            "csigan_b3" => Ok(ExperimentPreset::CsiganB3),
            "csigan_fs" => Ok(ExperimentPreset::CsiganFs),
            "baseline_semisup" => Ok(ExperimentPreset::BaselineSemisup),
            "secsigan" => Ok(ExperimentPreset::Secsigan),
            other => Err(ExperimentError::UnknownPreset(other.to_string())),
        }
    }
}

/// Classifier and training knobs shared across presets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PresetConfig {
    pub classifier: ClassifierConfig,
    pub teacher_train: ClassifierTrainConfig,
    pub student_train: ClassifierTrainConfig,
    pub pseudo_mode: PseudoMode,
}

impl PresetConfig {
    /// Settings sized for the synthetic desk-scale benchmark.
    pub fn desk_default(image_size: usize) -> Self {
        let classifier = ClassifierConfig {
            input_size: (image_size, image_size),
            toy_width: 6,
            fc_widths: [48, 32, 24],
            ..ClassifierConfig::default()
        };
        let teacher_train = ClassifierTrainConfig {
            learning_rate: 2e-3,
            batch_size: 16,
            epochs: 25,
            ..ClassifierTrainConfig::default()
        };
        let student_train = ClassifierTrainConfig {
            learning_rate: 1.5e-3,
            batch_size: 16,
            epochs: 30,
            ..ClassifierTrainConfig::default()
        };
        Self {
            classifier,
            teacher_train,
            student_train,
            pseudo_mode: PseudoMode::Soft,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PresetOutput {
    pub preset: ExperimentPreset,
    pub seed: u64,
    pub reports: PerDomainReports,
    /// The teacher's own test reports (always available; the baseline's
    /// reports coincide with these).
    pub teacher_reports: PerDomainReports,
}

/// Trains the seed's teacher on the labeled split.
pub fn train_preset_teacher(
    data: &BenchmarkData,
    config: &PresetConfig,
    seed: u64,
) -> Result<ClassifierModel, ExperimentError> {
    let stream = SeedStream::new(seed);
    let mut teacher = ClassifierModel::new(config.classifier, stream.child("teacher-init"))?;
    let mut cfg = config.teacher_train.clone();
    cfg.seed = stream.child("teacher-train");
    crate::classify::train_teacher(
        &mut teacher,
        &data.train_labeled_a,
        &data.val_labeled_a,
        &cfg,
    )?;
    Ok(teacher)
}

fn teacher_test_reports(
    teacher: &ClassifierModel,
    data: &BenchmarkData,
    config: &PresetConfig,
) -> Result<PerDomainReports, ExperimentError> {
    let images: Vec<&crate::dataio::ImageTensor> = data.test.iter().map(|(im, _, _)| im).collect();
    let preds = teacher.predict(&images, config.teacher_train.parallelism);
    let samples: Vec<(ClassPrediction, TissueClass, crate::dataio::DomainTag)> = preds
        .into_iter()
        .zip(&data.test)
        .map(|(p, (_, c, d))| (p, *c, *d))
        .collect();
    Ok(per_domain_report(&samples)?)
}

/// Runs one preset for one seed. The teacher argument is the seed's trained
/// teacher (shared across presets so comparisons hold the teacher fixed).
pub fn run_preset(
    preset: ExperimentPreset,
    data: &BenchmarkData,
    gan: Option<&GanModel>,
    teacher: &ClassifierModel,
    config: &PresetConfig,
    seed: u64,
) -> Result<PresetOutput, ExperimentError> {
    if preset.needs_gan() && gan.is_none() {
        return Err(ExperimentError::MissingGan(preset.to_string()));
    }
    if preset.needs_teacher() && !teacher.trained {
        return Err(ExperimentError::MissingTeacher(preset.to_string()));
    }
    let stream = SeedStream::new(seed);
    let teacher_reports = teacher_test_reports(teacher, data, config)?;

    let reports = match preset {
        ExperimentPreset::Baseline => teacher_reports.clone(),
        ExperimentPreset::CsiganB2 | ExperimentPreset::CsiganB3 | ExperimentPreset::CsiganFs => {
            let arm = match preset {
                ExperimentPreset::CsiganB2 => AblationArm::B2Only,
                ExperimentPreset::CsiganB3 => AblationArm::B3Only,
                _ => AblationArm::Full,
            };
            let mut cfg = config.student_train.clone();
            cfg.seed = stream.child("fs-train");
            let out = ablation_branch_run(
                arm,
                gan.expect("gan checked above"),
                &data.labeled_with_domain(),
                &data.val_with_domain(),
                &data.test_with_domain(),
                config.classifier,
                &cfg,
                stream.child("fs-init"),
            )?;
            out.reports
        }
        ExperimentPreset::BaselineSemisup => {
            let mut model =
                ClassifierModel::new(config.classifier, stream.child("semisup-init"))?;
            let mut cfg = config.student_train.clone();
            cfg.seed = stream.child("semisup-train");
            train_single_semisup(
                &mut model,
                teacher,
                &data.train_labeled_a,
                &data.train_unlabeled_b,
                &data.val_labeled_a,
                &cfg,
                config.pseudo_mode,
            )?;
            let images: Vec<&crate::dataio::ImageTensor> =
                data.test.iter().map(|(im, _, _)| im).collect();
            let preds = model.predict(&images, cfg.parallelism);
            let samples: Vec<_> = preds
                .into_iter()
                .zip(&data.test)
                .map(|(p, (_, c, d))| (p, *c, *d))
                .collect();
            per_domain_report(&samples)?
        }
        ExperimentPreset::Secsigan => {
            let gan = gan.expect("gan checked above");
            let mut student =
                MultiInputClassifier::new(config.classifier, stream.child("student-init"))?;
            let mut cfg = config.student_train.clone();
            cfg.seed = stream.child("student-train");
            train_student_semisup(
                &mut student,
                teacher,
                gan,
                &data.labeled_with_domain(),
                &data.unlabeled_with_domain(),
                &data.val_with_domain(),
                &cfg,
                config.pseudo_mode,
            )?;
            let samples_in: Vec<(crate::dataio::ImageTensor, crate::dataio::DomainTag)> = data
                .test
                .iter()
                .map(|(im, _, d)| (im.clone(), *d))
                .collect();
            let preds =
                crate::classify::student_predict(&student, gan, &samples_in, cfg.parallelism)?;
            let samples: Vec<_> = preds
                .into_iter()
                .zip(&data.test)
                .map(|(p, (_, c, d))| (p, *c, *d))
                .collect();
            per_domain_report(&samples)?
        }
    };

    Ok(PresetOutput {
        preset,
        seed,
        reports,
        teacher_reports,
    })
}
