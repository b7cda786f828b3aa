//! Alternating generator/discriminator training with per-epoch loss
//! logging and checkpointing.
//!
//! Checkpoint layout: `<root>/<run_id>/epoch_<n>/{g_ab,g_ba,d_a,d_b}.weights`
//! plus `config.json` (train + architecture config) and `history.csv`.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array4, ArrayD, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataio::{load_image, DatasetManifest, DomainTag, ImageTensor, ValueRange};
use crate::nn::layers::Params;
use crate::nn::optim::{step_params, Adam};
use crate::nn::weights;
use crate::par;
use crate::seed::SeedStream;
use crate::ssim::SsimParams;

use super::loss::{discriminator_step, generator_step, LossBreakdown};
use super::{GanError, GanModel, GanTrainConfig, Generator, PatchDiscriminator};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub losses: LossBreakdown,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLosses>,
}

impl LossHistory {
    pub const CSV_HEADER: &'static str =
        "epoch,adv_ab,adv_ba,sim_a,sim_b,cyc_a,cyc_b,total_g,total_d";

    pub fn write_csv(&self, path: &Path) -> Result<(), GanError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{}", Self::CSV_HEADER)?;
        for e in &self.epochs {
            let l = &e.losses;
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{}",
                e.epoch,
                l.adv_ab,
                l.adv_ba,
                l.sim_a,
                l.sim_b,
                l.cyc_a,
                l.cyc_b,
                l.total_g,
                l.total_d
            )?;
        }
        Ok(())
    }

    /// Mean cycle loss (both directions) per epoch.
    pub fn epoch_cycle_means(&self) -> Vec<f64> {
        self.epochs
            .iter()
            .map(|e| 0.5 * (e.losses.cyc_a + e.losses.cyc_b))
            .collect()
    }
}

/// Serialized alongside the weights so checkpoints are self-describing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointConfig {
    pub train: GanTrainConfig,
    pub arch: super::ArchitectureSpec,
}

/// Writes the four network weight files into `dir`.
pub fn save_gan_checkpoint(model: &GanModel, dir: &Path) -> Result<(), GanError> {
    std::fs::create_dir_all(dir)?;
    weights::save(&model.g_ab, &dir.join("g_ab.weights"))?;
    weights::save(&model.g_ba, &dir.join("g_ba.weights"))?;
    weights::save(&model.d_a, &dir.join("d_a.weights"))?;
    weights::save(&model.d_b, &dir.join("d_b.weights"))?;
    Ok(())
}

fn load_weights_into(model: &mut GanModel, dir: &Path) -> Result<(), GanError> {
    weights::load(&mut model.g_ab, &dir.join("g_ab.weights"))?;
    weights::load(&mut model.g_ba, &dir.join("g_ba.weights"))?;
    weights::load(&mut model.d_a, &dir.join("d_a.weights"))?;
    weights::load(&mut model.d_b, &dir.join("d_b.weights"))?;
    Ok(())
}

/// Loads a checkpointed model from `run_dir` (the directory holding
/// `config.json`); picks the highest epoch when `epoch` is `None`.
pub fn load_gan_checkpoint(
    run_dir: &Path,
    epoch: Option<usize>,
) -> Result<(GanModel, CheckpointConfig), GanError> {
    let config_path = run_dir.join("config.json");
    if !config_path.exists() {
        return Err(GanError::MissingCheckpoint(config_path));
    }
    let config: CheckpointConfig = serde_json::from_str(&std::fs::read_to_string(config_path)?)?;
    let epoch_dir = match epoch {
        Some(e) => run_dir.join(format!("epoch_{e}")),
        None => {
            let mut best: Option<(usize, PathBuf)> = None;
            for entry in std::fs::read_dir(run_dir)? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().to_string();
                if let Some(stripped) = name.strip_prefix("epoch_") {
                    if let Ok(n) = stripped.parse::<usize>() {
                        if best.as_ref().map(|(b, _)| n > *b).unwrap_or(true) {
                            best = Some((n, entry.path()));
                        }
                    }
                }
            }
            best.ok_or_else(|| GanError::MissingCheckpoint(run_dir.to_path_buf()))?
                .1
        }
    };
    if !epoch_dir.exists() {
        return Err(GanError::MissingCheckpoint(epoch_dir));
    }
    let mut model = super::init_gan(&config.arch, 0)?;
    load_weights_into(&mut model, &epoch_dir)?;
    Ok((model, config))
}

/// Both generators as one parameter set, for a single optimizer.
struct GeneratorPair<'a> {
    g_ab: &'a mut Generator,
    g_ba: &'a mut Generator,
}

impl Params for GeneratorPair<'_> {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.g_ab.visit(f);
        self.g_ba.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.g_ab.visit_mut(f);
        self.g_ba.visit_mut(f);
    }
}

fn stack_batch(images: &[ndarray::Array3<f64>], indices: &[usize]) -> Array4<f64> {
    let (c, h, w) = images[0].dim();
    let mut out = Array4::<f64>::zeros((indices.len(), c, h, w));
    for (slot, &i) in indices.iter().enumerate() {
        out.index_axis_mut(Axis(0), slot).assign(&images[i]);
    }
    out
}

/// Trains the model on pre-loaded symmetric-range images, one domain pool
/// per side. Deterministic in `config.seed`: data order, and therefore the
/// whole run, is reproduced exactly.
pub fn train_gan(
    model: &mut GanModel,
    images_a: &[ImageTensor],
    images_b: &[ImageTensor],
    config: &GanTrainConfig,
    checkpoint: Option<(&Path, &str)>,
) -> Result<LossHistory, GanError> {
    config.validate()?;
    if images_a.is_empty() || images_b.is_empty() {
        return Err(GanError::SingleDomainManifest);
    }

    let run_dir = if let Some((root, run_id)) = checkpoint {
        let dir = root.join(run_id);
        std::fs::create_dir_all(&dir)?;
        let cc = CheckpointConfig {
            train: config.clone(),
            arch: model.spec,
        };
        std::fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cc)?)?;
        Some(dir)
    } else {
        None
    };

    let chw_a: Vec<ndarray::Array3<f64>> = images_a.iter().map(|im| im.to_chw()).collect();
    let chw_b: Vec<ndarray::Array3<f64>> = images_b.iter().map(|im| im.to_chw()).collect();
    let ssim_params = SsimParams::for_range(images_a[0].range);

    let stream = SeedStream::new(config.seed);
    let bs = config.batch_size;
    let steps = images_a.len().max(images_b.len()).div_ceil(bs);

    let mut g_opt = Adam::new(config.learning_rate, config.beta1, config.beta2);
    let mut da_opt = Adam::new(config.learning_rate, config.beta1, config.beta2);
    let mut db_opt = Adam::new(config.learning_rate, config.beta1, config.beta2);

    let mut history = LossHistory::default();
    for epoch in 0..config.epochs {
        let mut order_a: Vec<usize> = (0..chw_a.len()).collect();
        let mut order_b: Vec<usize> = (0..chw_b.len()).collect();
        order_a.shuffle(&mut stream.rng_indexed("order-a", epoch as u64));
        order_b.shuffle(&mut stream.rng_indexed("order-b", epoch as u64));

        let mut sums = LossBreakdown::zeros();
        for step in 0..steps {
            let idx_a: Vec<usize> = (0..bs)
                .map(|k| order_a[(step * bs + k) % order_a.len()])
                .collect();
            let idx_b: Vec<usize> = (0..bs)
                .map(|k| order_b[(step * bs + k) % order_b.len()])
                .collect();
            let batch_a = stack_batch(&chw_a, &idx_a);
            let batch_b = stack_batch(&chw_b, &idx_b);

            let chains = generator_step(model, &batch_a, &batch_b, config, true, ssim_params, true);
            if !chains.breakdown.is_finite() {
                if let Some(dir) = &run_dir {
                    let _ = save_gan_checkpoint(model, &dir.join("diagnostic"));
                }
                return Err(GanError::NonFiniteLoss {
                    epoch,
                    step,
                    breakdown: chains.breakdown,
                });
            }
            step_params(
                &mut g_opt,
                &mut GeneratorPair {
                    g_ab: &mut model.g_ab,
                    g_ba: &mut model.g_ba,
                },
                &chains.grads,
            );

            let real_a = batch_a.into_dyn();
            let real_b = batch_b.into_dyn();
            let mode = config.gan_loss_mode;
            let parl = config.parallelism;
            let (da, db) = par::join(
                parl,
                || discriminator_step(&model.d_a, &real_a, &chains.fake_a, mode, parl),
                || discriminator_step(&model.d_b, &real_b, &chains.fake_b, mode, parl),
            );
            let (da_loss, da_grads) = da;
            let (db_loss, db_grads) = db;
            if !da_loss.is_finite() || !db_loss.is_finite() {
                return Err(GanError::NonFiniteLoss {
                    epoch,
                    step,
                    breakdown: chains.breakdown,
                });
            }
            step_params(&mut da_opt, &mut model.d_a, &da_grads);
            step_params(&mut db_opt, &mut model.d_b, &db_grads);

            let b = &chains.breakdown;
            sums.adv_ab += b.adv_ab;
            sums.adv_ba += b.adv_ba;
            sums.sim_a += b.sim_a;
            sums.sim_b += b.sim_b;
            sums.cyc_a += b.cyc_a;
            sums.cyc_b += b.cyc_b;
            sums.total_g += b.total_g;
            sums.total_d += b.total_d;
        }

        let n = steps as f64;
        let mean = LossBreakdown {
            adv_ab: sums.adv_ab / n,
            adv_ba: sums.adv_ba / n,
            sim_a: sums.sim_a / n,
            sim_b: sums.sim_b / n,
            cyc_a: sums.cyc_a / n,
            cyc_b: sums.cyc_b / n,
            total_g: sums.total_g / n,
            total_d: sums.total_d / n,
        };
        history.epochs.push(EpochLosses {
            epoch,
            losses: mean,
        });
        log::info!(
            "gan epoch {epoch}: total_g={:.4} cyc_a={:.4} cyc_b={:.4} sim_a={:.4} sim_b={:.4}",
            mean.total_g,
            mean.cyc_a,
            mean.cyc_b,
            mean.sim_a,
            mean.sim_b
        );

        if let Some(dir) = &run_dir {
            let cadence = config.checkpoint_every;
            let last = epoch + 1 == config.epochs;
            if last || (cadence > 0 && (epoch + 1) % cadence == 0) {
                save_gan_checkpoint(model, &dir.join(format!("epoch_{epoch}")))?;
                history.write_csv(&dir.join("history.csv"))?;
            }
        }
    }
    Ok(history)
}

/// Loads a manifest's images (symmetric range) and trains on them.
pub fn train_gan_manifest(
    model: &mut GanModel,
    manifest: &DatasetManifest,
    image_size: (usize, usize),
    config: &GanTrainConfig,
    checkpoint: Option<(&Path, &str)>,
) -> Result<LossHistory, GanError> {
    let mut images_a = Vec::new();
    let mut images_b = Vec::new();
    for record in &manifest.records {
        let img = load_image(record, image_size, ValueRange::Symmetric)?;
        match record.domain {
            DomainTag::Wli => images_a.push(img),
            DomainTag::Nbi => images_b.push(img),
        }
    }
    if images_a.is_empty() || images_b.is_empty() {
        return Err(GanError::SingleDomainManifest);
    }
    train_gan(model, &images_a, &images_b, config, checkpoint)
}

/// Discriminator parameter freeze helper used by tests: checksum of one
/// discriminator.
pub fn discriminator_checksum(d: &PatchDiscriminator) -> String {
    weights::checksum(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::{init_gan, ArchitectureSpec};
    use crate::synth;

    fn sym(images: Vec<ImageTensor>) -> Vec<ImageTensor> {
        images
            .into_iter()
            .map(|im| im.convert_range(ValueRange::Symmetric))
            .collect()
    }

    #[test]
    fn one_epoch_smoke_run_logs_finite_losses() {
        let corpus = synth::channel_swap_corpus(2, 8, 3);
        let a = sym(corpus.domain_a);
        let b = sym(corpus.domain_b);
        let mut model = init_gan(&ArchitectureSpec::desk(2, 1), 1).unwrap();
        let cfg = GanTrainConfig {
            epochs: 1,
            batch_size: 1,
            ..GanTrainConfig::default()
        };
        let history = train_gan(&mut model, &a, &b, &cfg, None).unwrap();
        assert_eq!(history.epochs.len(), 1);
        assert!(history.epochs[0].losses.is_finite());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let corpus = synth::channel_swap_corpus(2, 8, 7);
        let a = sym(corpus.domain_a);
        let b = sym(corpus.domain_b);
        let cfg = GanTrainConfig {
            epochs: 2,
            seed: 11,
            ..GanTrainConfig::default()
        };
        let mut m1 = init_gan(&ArchitectureSpec::desk(2, 1), 4).unwrap();
        let h1 = train_gan(&mut m1, &a, &b, &cfg, None).unwrap();
        let mut m2 = init_gan(&ArchitectureSpec::desk(2, 1), 4).unwrap();
        let h2 = train_gan(&mut m2, &a, &b, &cfg, None).unwrap();
        assert_eq!(m1.checksum(), m2.checksum());
        assert_eq!(
            h1.epochs.last().unwrap().losses.total_g,
            h2.epochs.last().unwrap().losses.total_g
        );
    }

    #[test]
    fn checkpoint_round_trip_restores_weights() {
        let corpus = synth::channel_swap_corpus(2, 8, 5);
        let a = sym(corpus.domain_a);
        let b = sym(corpus.domain_b);
        let mut model = init_gan(&ArchitectureSpec::desk(2, 1), 2).unwrap();
        let cfg = GanTrainConfig {
            epochs: 2,
            checkpoint_every: 1,
            ..GanTrainConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        train_gan(&mut model, &a, &b, &cfg, Some((dir.path(), "run1"))).unwrap();
        let run_dir = dir.path().join("run1");
        assert!(run_dir.join("config.json").exists());
        assert!(run_dir.join("history.csv").exists());
        assert!(run_dir.join("epoch_0").join("g_ab.weights").exists());

        let (loaded, cc) = load_gan_checkpoint(&run_dir, None).unwrap();
        assert_eq!(loaded.checksum(), model.checksum());
        assert_eq!(cc.train.epochs, 2);

        let history_text = std::fs::read_to_string(run_dir.join("history.csv")).unwrap();
        assert!(history_text.starts_with(LossHistory::CSV_HEADER));
        assert_eq!(history_text.lines().count(), 3);
    }

    #[test]
    fn single_domain_pool_is_rejected() {
        let corpus = synth::channel_swap_corpus(2, 8, 5);
        let a = sym(corpus.domain_a);
        let mut model = init_gan(&ArchitectureSpec::desk(2, 1), 2).unwrap();
        let cfg = GanTrainConfig {
            epochs: 1,
            ..GanTrainConfig::default()
        };
        assert!(matches!(
            train_gan(&mut model, &a, &[], &cfg, None),
            Err(GanError::SingleDomainManifest)
        ));
    }
}
