//! Branch ablation arms: train on one triple slot (or all three) in a
//! fully supervised way and report the standard metric battery.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataio::{DomainTag, ImageTensor, TissueClass};
use crate::evaluate::{per_domain_report, PerDomainReports};
use crate::gan::{translate_triple, GanModel, TranslationTriple};
use crate::par::{self, Parallelism};

use super::teacher::ClassifierHistory;
use super::{
    train_teacher, ClassPrediction, ClassifierConfig, ClassifierModel, ClassifierTrainConfig,
    ClassifyError, MultiInputClassifier, PseudoMode,
};

/// Which triple slot feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationArm {
    /// Originals only; identical in configuration to the baseline backbone.
    B1Only,
    /// Cross-domain translations only.
    B2Only,
    /// Round-trip reconstructions only.
    B3Only,
    /// The full three-branch student, fully supervised.
    Full,
}

impl fmt::Display for AblationArm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationArm::B1Only => "b1_only",
            AblationArm::B2Only => "b2_only",
            AblationArm::B3Only => "b3_only",
            AblationArm::Full => "full",
        })
    }
}

impl AblationArm {
    /// Slot selector for the single-branch arms.
    fn slot<'a>(&self, triple: &'a TranslationTriple) -> &'a ImageTensor {
        match self {
            AblationArm::B1Only => &triple.original,
            AblationArm::B2Only => &triple.translated,
            AblationArm::B3Only => &triple.reconstructed,
            AblationArm::Full => unreachable!("full arm uses all slots"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationOutput {
    pub arm: AblationArm,
    pub reports: PerDomainReports,
    pub history: ClassifierHistory,
}

fn build_triples(
    gan: &GanModel,
    samples: &[(ImageTensor, DomainTag, TissueClass)],
    parallelism: Parallelism,
) -> Result<Vec<(TranslationTriple, TissueClass, DomainTag)>, ClassifyError> {
    let triples = par::map_indexed(parallelism, samples.len(), |i| {
        let (image, domain, class) = &samples[i];
        translate_triple(gan, image, *domain).map(|t| (t, *class, *domain))
    });
    triples
        .into_iter()
        .map(|r| r.map_err(ClassifyError::from))
        .collect()
}

/// Trains the arm's classifier on labeled triples and reports metrics on
/// the test set, tagged with the arm id in the returned output.
#[allow(clippy::too_many_arguments)]
pub fn ablation_branch_run(
    arm: AblationArm,
    gan: &GanModel,
    train: &[(ImageTensor, DomainTag, TissueClass)],
    val: &[(ImageTensor, DomainTag, TissueClass)],
    test: &[(ImageTensor, DomainTag, TissueClass)],
    model_config: ClassifierConfig,
    train_config: &ClassifierTrainConfig,
    model_seed: u64,
) -> Result<AblationOutput, ClassifyError> {
    let train_triples = build_triples(gan, train, train_config.parallelism)?;
    let val_triples = build_triples(gan, val, train_config.parallelism)?;
    let test_triples = build_triples(gan, test, train_config.parallelism)?;

    let (history, preds): (ClassifierHistory, Vec<ClassPrediction>) = match arm {
        AblationArm::Full => {
            let mut student = MultiInputClassifier::new(model_config, model_seed)?;
            // Fully supervised: every sample carries its ground truth.
            let labeled: Vec<(ImageTensor, DomainTag, TissueClass)> = train
                .iter()
                .map(|(im, d, c)| (im.clone(), *d, *c))
                .collect();
            let out = super::train_student_semisup(
                &mut student,
                &ClassifierModel::new(model_config, model_seed)?,
                gan,
                &labeled,
                &[],
                val,
                train_config,
                PseudoMode::Soft,
            )?;
            let refs: Vec<&TranslationTriple> = test_triples.iter().map(|(t, _, _)| t).collect();
            let preds = student.predict_triples(&refs, train_config.parallelism);
            (out.history, preds)
        }
        single => {
            let slot_set = |triples: &[(TranslationTriple, TissueClass, DomainTag)]| -> Vec<(ImageTensor, TissueClass)> {
                triples
                    .iter()
                    .map(|(t, c, _)| (single.slot(t).clone(), *c))
                    .collect()
            };
            let mut model = ClassifierModel::new(model_config, model_seed)?;
            let history = train_teacher(
                &mut model,
                &slot_set(&train_triples),
                &slot_set(&val_triples),
                train_config,
            )?;
            let test_slots = slot_set(&test_triples);
            let refs: Vec<&ImageTensor> = test_slots.iter().map(|(im, _)| im).collect();
            let preds = model.predict(&refs, train_config.parallelism);
            (history, preds)
        }
    };

    let samples: Vec<(ClassPrediction, TissueClass, DomainTag)> = preds
        .into_iter()
        .zip(test_triples.iter())
        .map(|(p, (_, c, d))| (p, *c, *d))
        .collect();
    let reports = per_domain_report(&samples).map_err(|e| match e {
        crate::evaluate::EvalError::Gan(g) => ClassifyError::Gan(g),
        other => ClassifyError::InvalidConfig(other.to_string()),
    })?;

    Ok(AblationOutput {
        arm,
        reports,
        history,
    })
}

/// Slot selector used by tests to verify per-arm input sensitivity.
#[cfg(test)]
pub(crate) fn slot_of(arm: AblationArm, triple: &TranslationTriple) -> &ImageTensor {
    arm.slot(triple)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::ValueRange;
    use crate::synth;

    fn small_config() -> ClassifierConfig {
        ClassifierConfig {
            input_size: (16, 16),
            toy_width: 4,
            fc_widths: [16, 12, 8],
            ..ClassifierConfig::default()
        }
    }

    fn dataset() -> Vec<(ImageTensor, DomainTag, TissueClass)> {
        synth::separable_dataset(32, 16, 3)
            .into_iter()
            .map(|(im, c)| (im.convert_range(ValueRange::Symmetric), DomainTag::Wli, c))
            .collect()
    }

    #[test]
    fn arms_produce_tagged_reports() {
        let gan = GanModel::identity_stub();
        let data = dataset();
        let cfg = ClassifierTrainConfig {
            learning_rate: 3e-3,
            batch_size: 8,
            epochs: 6,
            ..ClassifierTrainConfig::default()
        };
        for arm in [AblationArm::B1Only, AblationArm::B2Only, AblationArm::Full] {
            let out = ablation_branch_run(
                arm,
                &gan,
                &data[..16],
                &data[16..24],
                &data[24..],
                small_config(),
                &cfg,
                5,
            )
            .unwrap();
            assert_eq!(out.arm, arm);
            assert!(out.reports.all.accuracy.is_finite());
            assert!(out.reports.wli.is_some());
            assert!(out.reports.nbi.is_none());
        }
    }

    #[test]
    fn b2_arm_consumes_translated_slot() {
        let t = TranslationTriple {
            original: synth::separable_dataset(1, 16, 1)[0].0.clone(),
            translated: synth::separable_dataset(1, 16, 2)[0].0.clone(),
            reconstructed: synth::separable_dataset(1, 16, 3)[0].0.clone(),
            origin_domain: DomainTag::Wli,
        };
        assert_eq!(slot_of(AblationArm::B2Only, &t), &t.translated);
        assert_eq!(slot_of(AblationArm::B3Only, &t), &t.reconstructed);
        assert_eq!(slot_of(AblationArm::B1Only, &t), &t.original);
    }

    #[test]
    fn b1_arm_with_identity_stub_matches_baseline_training() {
        // With identity generators, the b1 slot is the original image, so the
        // arm is configuration-identical to the baseline teacher.
        let gan = GanModel::identity_stub();
        let data = dataset();
        let cfg = ClassifierTrainConfig {
            learning_rate: 3e-3,
            batch_size: 8,
            epochs: 4,
            seed: 3,
            ..ClassifierTrainConfig::default()
        };
        let out = ablation_branch_run(
            AblationArm::B1Only,
            &gan,
            &data[..16],
            &[],
            &data[24..],
            small_config(),
            &cfg,
            9,
        )
        .unwrap();

        let mut baseline = ClassifierModel::new(small_config(), 9).unwrap();
        let train_set: Vec<(ImageTensor, TissueClass)> = data[..16]
            .iter()
            .map(|(im, _, c)| (im.clone(), *c))
            .collect();
        train_teacher(&mut baseline, &train_set, &[], &cfg).unwrap();
        let test_refs: Vec<&ImageTensor> = data[24..].iter().map(|(im, _, _)| im).collect();
        let preds = baseline.predict(&test_refs, Parallelism::Sequential);
        let samples: Vec<(ClassPrediction, TissueClass, DomainTag)> = preds
            .into_iter()
            .zip(&data[24..])
            .map(|(p, (_, d, c))| (p, *c, *d))
            .collect();
        let baseline_reports = per_domain_report(&samples).unwrap();
        assert_eq!(out.reports.all.confusion, baseline_reports.all.confusion);
    }
}
