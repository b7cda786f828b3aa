//! Pseudo-labeling and semi-supervised student training over translation
//! triples.
//!
//! The GAN and the teacher stay frozen throughout (enforced by shared
//! references); ground-truth labels take precedence over teacher
//! pseudo-labels whenever both exist.

use ndarray::{Array2, ArrayD};
use rand::seq::SliceRandom;

use crate::dataio::{augment, DomainTag, ImageTensor, TissueClass};
use crate::gan::{translate_triple, GanModel, TranslationTriple};
use crate::nn::layers::Params;
use crate::nn::optim::{step_params, Adam};
use crate::nn::tape::Tape;
use crate::par::{self, Parallelism};
use crate::seed::SeedStream;

use super::loss::ce_from_logits;
use super::model::predictions_from_logits;
use super::teacher::{stack_images, ClassifierHistory, HistoryRow};
use super::{
    ClassPrediction, ClassifierModel, ClassifierTrainConfig, ClassifyError, LabelSource,
    MultiInputClassifier, PseudoLabel, PseudoMode,
};

/// One training sample: a triple plus its target and provenance.
#[derive(Debug, Clone)]
pub struct PoolSample {
    pub triple: TranslationTriple,
    pub target: PseudoLabel,
    pub truth: Option<TissueClass>,
}

/// Teacher prediction on one image, as a soft or hardened pseudo-label.
pub fn pseudo_label(
    teacher: &ClassifierModel,
    x: &ImageTensor,
    mode: PseudoMode,
) -> Result<PseudoLabel, ClassifyError> {
    if !teacher.trained {
        return Err(ClassifyError::UntrainedTeacher);
    }
    let pred = teacher.predict(&[x], Parallelism::Sequential)[0];
    Ok(match mode {
        PseudoMode::Soft => PseudoLabel {
            probs: pred.probs,
            mode: PseudoMode::Soft,
            source: LabelSource::Teacher,
        },
        PseudoMode::Hard => PseudoLabel::one_hot(pred.predicted, LabelSource::Teacher),
    })
}

/// Student forward pass on one triple.
pub fn student_forward(
    model: &MultiInputClassifier,
    triple: &TranslationTriple,
) -> ClassPrediction {
    model.predict_triples(&[triple], Parallelism::Sequential)[0]
}

/// Builds the semi-supervised pool: triples for every sample, ground-truth
/// targets where available, teacher pseudo-labels (on the un-augmented
/// original) otherwise.
pub fn build_semisup_pool(
    gan: &GanModel,
    teacher: &ClassifierModel,
    labeled: &[(ImageTensor, DomainTag, TissueClass)],
    unlabeled: &[(ImageTensor, DomainTag)],
    mode: PseudoMode,
    parallelism: Parallelism,
) -> Result<Vec<PoolSample>, ClassifyError> {
    if labeled.is_empty() && unlabeled.is_empty() {
        return Err(ClassifyError::EmptyPool);
    }
    if !teacher.trained && !unlabeled.is_empty() {
        return Err(ClassifyError::UntrainedTeacher);
    }
    let labeled_samples = par::map_indexed(parallelism, labeled.len(), |i| {
        let (image, domain, class) = &labeled[i];
        let triple = translate_triple(gan, image, *domain)?;
        Ok::<PoolSample, ClassifyError>(PoolSample {
            triple,
            target: PseudoLabel::one_hot(*class, LabelSource::GroundTruth),
            truth: Some(*class),
        })
    });
    let unlabeled_samples = par::map_indexed(parallelism, unlabeled.len(), |i| {
        let (image, domain) = &unlabeled[i];
        let triple = translate_triple(gan, image, *domain)?;
        let target = pseudo_label(teacher, image, mode)?;
        Ok::<PoolSample, ClassifyError>(PoolSample {
            triple,
            target,
            truth: None,
        })
    });
    let mut pool = Vec::with_capacity(labeled.len() + unlabeled.len());
    for s in labeled_samples {
        pool.push(s?);
    }
    for s in unlabeled_samples {
        pool.push(s?);
    }
    Ok(pool)
}

/// Student predictions for raw images: triples are built with the frozen
/// GAN, then fed through the three branches.
pub fn student_predict(
    model: &MultiInputClassifier,
    gan: &GanModel,
    samples: &[(ImageTensor, DomainTag)],
    parallelism: Parallelism,
) -> Result<Vec<ClassPrediction>, ClassifyError> {
    let triples = par::map_indexed(parallelism, samples.len(), |i| {
        translate_triple(gan, &samples[i].0, samples[i].1)
    });
    let mut collected = Vec::with_capacity(samples.len());
    for t in triples {
        collected.push(t?);
    }
    let refs: Vec<&TranslationTriple> = collected.iter().collect();
    Ok(model.predict_triples(&refs, parallelism))
}

#[derive(Debug, Clone)]
pub struct StudentTrainOutput {
    pub history: ClassifierHistory,
    /// (before, after) parameter checksums of the frozen components.
    pub gan_checksums: (String, String),
    pub teacher_checksums: (String, String),
}

/// Semi-supervised training of a single-input classifier on original
/// images only (no translation): ground truth where available, teacher
/// pseudo-labels on the unlabeled pool. The Table-style "baseline
/// semi-supervised" arm.
pub fn train_single_semisup(
    model: &mut ClassifierModel,
    teacher: &ClassifierModel,
    labeled: &[(ImageTensor, TissueClass)],
    unlabeled: &[ImageTensor],
    val: &[(ImageTensor, TissueClass)],
    config: &ClassifierTrainConfig,
    mode: PseudoMode,
) -> Result<ClassifierHistory, ClassifyError> {
    config.validate()?;
    if labeled.is_empty() && unlabeled.is_empty() {
        return Err(ClassifyError::EmptyPool);
    }
    if !teacher.trained && !unlabeled.is_empty() {
        return Err(ClassifyError::UntrainedTeacher);
    }
    let mut pool: Vec<(ImageTensor, PseudoLabel, Option<TissueClass>)> = labeled
        .iter()
        .map(|(im, c)| {
            (
                im.clone(),
                PseudoLabel::one_hot(*c, LabelSource::GroundTruth),
                Some(*c),
            )
        })
        .collect();
    for im in unlabeled {
        let target = pseudo_label(teacher, im, mode)?;
        pool.push((im.clone(), target, None));
    }

    let stream = SeedStream::new(config.seed);
    let mut opt = Adam::new(config.learning_rate, config.beta1, config.beta2);
    let mut history = ClassifierHistory::default();
    let mut best: Option<(f64, Vec<ArrayD<f64>>)> = None;
    let n = pool.len();
    let steps = n.div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream.rng_indexed("order", epoch as u64));
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for step in 0..steps {
            let idx: Vec<usize> = order
                [step * config.batch_size..((step + 1) * config.batch_size).min(n)]
                .to_vec();
            if idx.is_empty() {
                continue;
            }
            let mut images: Vec<ImageTensor> = Vec::with_capacity(idx.len());
            for &i in &idx {
                let img = &pool[i].0;
                images.push(match &config.augment {
                    Some(cfg) => augment(
                        img,
                        cfg,
                        stream.child_indexed("augment", (epoch * n + i) as u64),
                    )?,
                    None => img.clone(),
                });
            }
            let x = stack_images(&images.iter().collect::<Vec<_>>());
            let mut targets = Array2::<f64>::zeros((idx.len(), 4));
            for (row, &i) in idx.iter().enumerate() {
                for k in 0..4 {
                    targets[[row, k]] = pool[i].1.probs[k];
                }
            }
            let t = Tape::with_parallelism(config.parallelism);
            let xv = t.constant(x.into_dyn());
            let bound = model.bind(&t, true);
            let logits = bound.forward(&t, xv);
            let loss = ce_from_logits(&t, logits, &targets, idx.len() as f64);
            let grads = t.backward(loss);
            let grad_arrays: Vec<ArrayD<f64>> = bound
                .var_ids()
                .into_iter()
                .map(|id| grads.get_or_zeros(id, &t.shape(id)))
                .collect();
            step_params(&mut opt, model, &grad_arrays);
            epoch_loss += t.scalar(loss) * idx.len() as f64;
            seen += idx.len();
        }
        history.rows.push(HistoryRow {
            epoch,
            split: "train".into(),
            loss: epoch_loss / seen as f64,
            acc: f64::NAN,
        });
        if !val.is_empty() {
            let (vloss, vacc) =
                super::teacher::evaluate_classifier(model, val, config.parallelism);
            history.rows.push(HistoryRow {
                epoch,
                split: "val".into(),
                loss: vloss,
                acc: vacc,
            });
            let better = best.as_ref().map(|(b, _)| vacc > *b).unwrap_or(true);
            if better {
                best = Some((vacc, model.param_arrays()));
            }
        }
    }
    if let Some((_, params)) = best {
        let mut i = 0;
        model.visit_mut(&mut |_, p| {
            p.assign(&params[i]);
            i += 1;
        });
    }
    model.trained = true;
    Ok(history)
}

/// Semi-supervised training loop over a pre-built pool.
///
/// Augmentation, when configured, touches only the branch-1 original;
/// translation and reconstruction enter as produced by the GAN.
pub fn train_student_semisup(
    student: &mut MultiInputClassifier,
    teacher: &ClassifierModel,
    gan: &GanModel,
    labeled: &[(ImageTensor, DomainTag, TissueClass)],
    unlabeled: &[(ImageTensor, DomainTag)],
    val: &[(ImageTensor, DomainTag, TissueClass)],
    config: &ClassifierTrainConfig,
    mode: PseudoMode,
) -> Result<StudentTrainOutput, ClassifyError> {
    config.validate()?;
    let gan_before = gan.checksum();
    let teacher_before = teacher.checksum();

    let pool = build_semisup_pool(gan, teacher, labeled, unlabeled, mode, config.parallelism)?;
    let val_pool: Vec<PoolSample> = if val.is_empty() {
        Vec::new()
    } else {
        build_semisup_pool(gan, teacher, val, &[], mode, config.parallelism)?
    };

    let stream = SeedStream::new(config.seed);
    let mut opt = Adam::new(config.learning_rate, config.beta1, config.beta2);
    let mut history = ClassifierHistory::default();
    let mut best: Option<(f64, Vec<ArrayD<f64>>)> = None;

    let n = pool.len();
    let steps = n.div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream.rng_indexed("order", epoch as u64));
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut labeled_seen = 0usize;
        let mut seen = 0usize;
        for step in 0..steps {
            let idx: Vec<usize> = order
                [step * config.batch_size..((step + 1) * config.batch_size).min(n)]
                .to_vec();
            if idx.is_empty() {
                continue;
            }
            // Branch-1 originals, augmented; branches 2 and 3 as generated.
            let mut originals: Vec<ImageTensor> = Vec::with_capacity(idx.len());
            for &i in &idx {
                let img = &pool[i].triple.original;
                originals.push(match &config.augment {
                    Some(cfg) => augment(
                        img,
                        cfg,
                        stream.child_indexed("augment", (epoch * n + i) as u64),
                    )?,
                    None => img.clone(),
                });
            }
            let x1 = stack_images(&originals.iter().collect::<Vec<_>>());
            let x2 = stack_images(
                &idx.iter()
                    .map(|&i| &pool[i].triple.translated)
                    .collect::<Vec<_>>(),
            );
            let x3 = stack_images(
                &idx.iter()
                    .map(|&i| &pool[i].triple.reconstructed)
                    .collect::<Vec<_>>(),
            );
            let mut targets = Array2::<f64>::zeros((idx.len(), 4));
            for (row, &i) in idx.iter().enumerate() {
                for k in 0..4 {
                    targets[[row, k]] = pool[i].target.probs[k];
                }
            }

            let t = Tape::with_parallelism(config.parallelism);
            let x1v = t.constant(x1.into_dyn());
            let x2v = t.constant(x2.into_dyn());
            let x3v = t.constant(x3.into_dyn());
            let bound = student.bind(&t, true);
            let logits = bound.forward(&t, x1v, x2v, x3v);
            let loss = ce_from_logits(&t, logits, &targets, idx.len() as f64);
            let grads = t.backward(loss);
            let grad_arrays: Vec<ArrayD<f64>> = bound
                .var_ids()
                .into_iter()
                .map(|id| grads.get_or_zeros(id, &t.shape(id)))
                .collect();
            step_params(&mut opt, student, &grad_arrays);

            epoch_loss += t.scalar(loss) * idx.len() as f64;
            seen += idx.len();
            for (pred, &i) in predictions_from_logits(&t.value(logits)).iter().zip(&idx) {
                if let Some(truth) = pool[i].truth {
                    labeled_seen += 1;
                    if pred.predicted == truth {
                        correct += 1;
                    }
                }
            }
        }
        history.rows.push(HistoryRow {
            epoch,
            split: "train".into(),
            loss: epoch_loss / seen as f64,
            acc: if labeled_seen > 0 {
                correct as f64 / labeled_seen as f64
            } else {
                f64::NAN
            },
        });

        if !val_pool.is_empty() {
            let refs: Vec<&TranslationTriple> = val_pool.iter().map(|s| &s.triple).collect();
            let preds = student.predict_triples(&refs, config.parallelism);
            let mut vloss = 0.0;
            let mut vcorrect = 0usize;
            for (pred, sample) in preds.iter().zip(&val_pool) {
                vloss += super::cross_entropy(&sample.target, pred);
                if Some(pred.predicted) == sample.truth {
                    vcorrect += 1;
                }
            }
            let vacc = vcorrect as f64 / val_pool.len() as f64;
            history.rows.push(HistoryRow {
                epoch,
                split: "val".into(),
                loss: vloss / val_pool.len() as f64,
                acc: vacc,
            });
            let better = best.as_ref().map(|(b, _)| vacc > *b).unwrap_or(true);
            if better {
                best = Some((vacc, student.param_arrays()));
            }
        }
    }
    if let Some((_, params)) = best {
        let mut i = 0;
        student.visit_mut(&mut |_, p| {
            p.assign(&params[i]);
            i += 1;
        });
    }
    student.trained = true;

    Ok(StudentTrainOutput {
        history,
        gan_checksums: (gan_before, gan.checksum()),
        teacher_checksums: (teacher_before, teacher.checksum()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::ClassifierConfig;
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

    fn trained_teacher() -> (ClassifierModel, Vec<(ImageTensor, TissueClass)>) {
        let data = synth::separable_dataset(48, 16, 3);
        let mut model = ClassifierModel::new(small_config(), 1).unwrap();
        let cfg = ClassifierTrainConfig {
            learning_rate: 3e-3,
            batch_size: 16,
            epochs: 15,
            ..ClassifierTrainConfig::default()
        };
        super::super::train_teacher(&mut model, &data, &[], &cfg).unwrap();
        (model, data)
    }

    #[test]
    fn pseudo_label_modes() {
        let (teacher, data) = trained_teacher();
        let soft = pseudo_label(&teacher, &data[0].0, PseudoMode::Soft).unwrap();
        assert!(soft.is_normalized());
        assert_eq!(soft.source, LabelSource::Teacher);
        // Soft mode passes the forward output through unchanged.
        let direct = teacher.predict(&[&data[0].0], Parallelism::Sequential)[0];
        assert_eq!(soft.probs, direct.probs);

        let hard = pseudo_label(&teacher, &data[0].0, PseudoMode::Hard).unwrap();
        assert!(hard.is_one_hot());
        assert_eq!(
            hard.probs[direct.predicted.index().unwrap()],
            1.0,
            "hard mode one-hots the argmax"
        );
    }

    #[test]
    fn hard_equals_one_hot_of_soft_argmax() {
        let (teacher, data) = trained_teacher();
        for (img, _) in data.iter().take(8) {
            let soft = pseudo_label(&teacher, img, PseudoMode::Soft).unwrap();
            let hard = pseudo_label(&teacher, img, PseudoMode::Hard).unwrap();
            let argmax = ClassPrediction::from_probs(soft.probs).predicted;
            assert_eq!(hard.probs[argmax.index().unwrap()], 1.0);
        }
    }

    #[test]
    fn untrained_teacher_is_guarded() {
        let teacher = ClassifierModel::new(small_config(), 1).unwrap();
        let data = synth::separable_dataset(4, 16, 3);
        assert!(matches!(
            pseudo_label(&teacher, &data[0].0, PseudoMode::Soft),
            Err(ClassifyError::UntrainedTeacher)
        ));
    }

    #[test]
    fn frozen_components_are_untouched_by_training() {
        let (teacher, data) = trained_teacher();
        let gan = GanModel::identity_stub();
        let labeled: Vec<(ImageTensor, DomainTag, TissueClass)> = data
            .iter()
            .take(16)
            .map(|(im, c)| {
                (
                    im.convert_range(ValueRange::Symmetric),
                    DomainTag::Wli,
                    *c,
                )
            })
            .collect();
        let unlabeled: Vec<(ImageTensor, DomainTag)> = data
            .iter()
            .skip(16)
            .take(8)
            .map(|(im, _)| (im.convert_range(ValueRange::Symmetric), DomainTag::Nbi))
            .collect();
        let mut student = MultiInputClassifier::new(small_config(), 9).unwrap();
        let cfg = ClassifierTrainConfig {
            learning_rate: 1e-3,
            batch_size: 8,
            epochs: 2,
            ..ClassifierTrainConfig::default()
        };
        let out = train_student_semisup(
            &mut student,
            &teacher,
            &gan,
            &labeled,
            &unlabeled,
            &[],
            &cfg,
            PseudoMode::Soft,
        )
        .unwrap();
        assert_eq!(out.gan_checksums.0, out.gan_checksums.1);
        assert_eq!(out.teacher_checksums.0, out.teacher_checksums.1);
        assert!(student.trained);
        assert_eq!(out.history.rows.len(), 2);
    }

    #[test]
    fn labeled_only_pool_reduces_to_fully_supervised_training() {
        let (teacher, data) = trained_teacher();
        let gan = GanModel::identity_stub();
        let labeled: Vec<(ImageTensor, DomainTag, TissueClass)> = data
            .iter()
            .take(12)
            .map(|(im, c)| {
                (
                    im.convert_range(ValueRange::Symmetric),
                    DomainTag::Wli,
                    *c,
                )
            })
            .collect();
        let pool =
            build_semisup_pool(&gan, &teacher, &labeled, &[], PseudoMode::Soft, Parallelism::auto())
                .unwrap();
        assert_eq!(pool.len(), 12);
        assert!(pool
            .iter()
            .all(|s| s.target.source == LabelSource::GroundTruth && s.target.is_one_hot()));
    }
}
