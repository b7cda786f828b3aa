//! Fully supervised teacher training with best-validation retention.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Array4, ArrayD, Axis};
use rand::seq::SliceRandom;

use crate::dataio::{augment, ImageTensor, TissueClass};
use crate::nn::layers::Params;
use crate::nn::optim::{step_params, Adam};
use crate::nn::tape::Tape;
use crate::par::Parallelism;
use crate::seed::SeedStream;

use super::loss::ce_from_logits;
use super::model::predictions_from_logits;
use super::{ClassifierModel, ClassifierTrainConfig, ClassifyError};

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ClassifierHistory {
    pub rows: Vec<HistoryRow>,
}

impl ClassifierHistory {
    pub const CSV_HEADER: &'static str = "epoch,split,loss,acc";

    pub fn write_csv(&self, path: &Path) -> Result<(), ClassifyError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", Self::CSV_HEADER)?;
        for r in &self.rows {
            writeln!(f, "{},{},{},{}", r.epoch, r.split, r.loss, r.acc)?;
        }
        Ok(())
    }

    pub fn best(&self, split: &str) -> Option<&HistoryRow> {
        self.rows
            .iter()
            .filter(|r| r.split == split)
            .max_by(|a, b| a.acc.partial_cmp(&b.acc).unwrap())
    }
}

pub(crate) fn stack_images(images: &[&ImageTensor]) -> Array4<f64> {
    let (h, w) = images[0].hw();
    let mut out = Array4::<f64>::zeros((images.len(), 3, h, w));
    for (n, img) in images.iter().enumerate() {
        out.index_axis_mut(Axis(0), n).assign(&img.to_chw());
    }
    out
}

pub(crate) fn one_hot_targets(classes: &[TissueClass], weights: Option<&[f64; 4]>) -> Array2<f64> {
    let mut targets = Array2::<f64>::zeros((classes.len(), 4));
    for (i, c) in classes.iter().enumerate() {
        let k = c.index().expect("labeled class");
        targets[[i, k]] = weights.map_or(1.0, |w| w[k]);
    }
    targets
}

pub(crate) fn inverse_frequency_weights(classes: &[TissueClass]) -> [f64; 4] {
    let mut counts = [0usize; 4];
    for c in classes {
        counts[c.index().expect("labeled class")] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count() as f64;
    let total: usize = counts.iter().sum();
    let mut weights = [0.0; 4];
    for k in 0..4 {
        if counts[k] > 0 {
            weights[k] = total as f64 / (present * counts[k] as f64);
        }
    }
    weights
}

/// Mean loss and accuracy of a frozen model on a labeled set.
pub fn evaluate_classifier(
    model: &ClassifierModel,
    samples: &[(ImageTensor, TissueClass)],
    parallelism: Parallelism,
) -> (f64, f64) {
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let images: Vec<&ImageTensor> = samples.iter().map(|(im, _)| im).collect();
    let preds = model.predict(&images, parallelism);
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (pred, (_, class)) in preds.iter().zip(samples) {
        let target = super::PseudoLabel::one_hot(*class, super::LabelSource::GroundTruth);
        loss += super::cross_entropy(&target, pred);
        if pred.predicted == *class {
            correct += 1;
        }
    }
    (
        loss / samples.len() as f64,
        correct as f64 / samples.len() as f64,
    )
}

/// Supervised training; retains the best-validation weights when a
/// validation split is present. Deterministic per `config.seed`.
pub fn train_teacher(
    model: &mut ClassifierModel,
    train: &[(ImageTensor, TissueClass)],
    val: &[(ImageTensor, TissueClass)],
    config: &ClassifierTrainConfig,
) -> Result<ClassifierHistory, ClassifyError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ClassifyError::EmptyPool);
    }
    for k in 0..4 {
        let class = TissueClass::from_index(k);
        if !train.iter().any(|(_, c)| *c == class) {
            log::warn!("class {class} absent from the training fold; proceeding");
        }
    }
    let classes: Vec<TissueClass> = train.iter().map(|(_, c)| *c).collect();
    let class_weights = config
        .weight_by_class_freq
        .then(|| inverse_frequency_weights(&classes));

    let stream = SeedStream::new(config.seed);
    let mut opt = Adam::new(config.learning_rate, config.beta1, config.beta2);
    let mut history = ClassifierHistory::default();
    let mut best: Option<(f64, Vec<ArrayD<f64>>)> = None;

    let n = train.len();
    let steps = n.div_ceil(config.batch_size);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream.rng_indexed("order", epoch as u64));
        let mut epoch_loss = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for step in 0..steps {
            let idx: Vec<usize> = order
                [step * config.batch_size..((step + 1) * config.batch_size).min(n)]
                .to_vec();
            if idx.is_empty() {
                continue;
            }
            let mut batch_images: Vec<ImageTensor> = Vec::with_capacity(idx.len());
            for &i in &idx {
                let img = &train[i].0;
                let img = match &config.augment {
                    Some(cfg) => augment(
                        img,
                        cfg,
                        stream.child_indexed("augment", (epoch * n + i) as u64),
                    )?,
                    None => img.clone(),
                };
                batch_images.push(img);
            }
            let refs: Vec<&ImageTensor> = batch_images.iter().collect();
            let x = stack_images(&refs);
            let batch_classes: Vec<TissueClass> = idx.iter().map(|&i| train[i].1).collect();
            let targets = one_hot_targets(&batch_classes, class_weights.as_ref());
            let normalizer = targets.sum().max(1e-12);

            let t = Tape::with_parallelism(config.parallelism);
            let xv = t.constant(x.into_dyn());
            let bound = model.bind(&t, true);
            let logits = bound.forward(&t, xv);
            let loss = ce_from_logits(&t, logits, &targets, normalizer);
            let grads = t.backward(loss);
            let grad_arrays: Vec<ArrayD<f64>> = bound
                .var_ids()
                .into_iter()
                .map(|id| grads.get_or_zeros(id, &t.shape(id)))
                .collect();
            step_params(&mut opt, model, &grad_arrays);

            epoch_loss += t.scalar(loss) * idx.len() as f64;
            for (pred, class) in predictions_from_logits(&t.value(logits))
                .iter()
                .zip(&batch_classes)
            {
                if pred.predicted == *class {
                    correct += 1;
                }
            }
            seen += idx.len();
        }
        history.rows.push(HistoryRow {
            epoch,
            split: "train".into(),
            loss: epoch_loss / seen as f64,
            acc: correct as f64 / seen as f64,
        });

        if !val.is_empty() {
            let (vloss, vacc) = evaluate_classifier(model, val, config.parallelism);
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

    // Restore the best validation weights.
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
