//! Cycle-consistency translation network with a similarity loss: model,
//! losses, training loop, triple generation, checkpoints.

mod discriminator;
mod generator;
mod loss;
mod train;
mod translate;

pub use discriminator::{BoundPatchDiscriminator, DiscriminatorSpec, PatchDiscriminator};
pub use generator::{BoundGenerator, Generator, GeneratorSpec, ResnetGenerator};
pub use loss::{
    adversarial_loss, cycle_loss, discriminator_gradients, discriminator_loss_value,
    generator_gradients, generator_objective_value, similarity_loss, total_objective,
    GeneratorChains, LossBreakdown,
};
pub use train::{
    discriminator_checksum, load_gan_checkpoint, save_gan_checkpoint, train_gan,
    train_gan_manifest, CheckpointConfig, EpochLosses, LossHistory,
};
pub use translate::{translate_batch, translate_oneway, translate_triple, TranslationTriple};

use std::path::PathBuf;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::DomainTag;
use crate::nn::layers::Params;
use crate::nn::weights::{self, WeightsError};
use crate::par::Parallelism;
use crate::seed::SeedStream;

#[derive(Debug, Error)]
pub enum GanError {
    #[error("invalid architecture spec: {0}")]
    InvalidSpec(String),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("manifest covers a single domain; GAN training needs both")]
    SingleDomainManifest,
    #[error("non-finite loss at epoch {epoch}, step {step}: {breakdown:?}")]
    NonFiniteLoss {
        epoch: usize,
        step: usize,
        breakdown: LossBreakdown,
    },
    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(PathBuf),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Adversarial objective flavor. The log form is the written objective;
/// least squares is the common practical alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanLossMode {
    LogAdversarial,
    LeastSquares,
}

/// Probability clamp for the log adversarial loss.
pub const ADV_EPS: f64 = 1e-7;

/// Generator/discriminator sizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub image_channels: usize,
    pub gen_base_filters: usize,
    pub gen_residual_blocks: usize,
    pub disc_base_filters: usize,
    pub disc_layers: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            image_channels: 3,
            gen_base_filters: 64,
            gen_residual_blocks: 6,
            disc_base_filters: 64,
            disc_layers: 3,
        }
    }
}

impl ArchitectureSpec {
    /// Small configuration for desk-scale runs.
    pub fn desk(gen_base_filters: usize, gen_residual_blocks: usize) -> Self {
        Self {
            image_channels: 3,
            gen_base_filters,
            gen_residual_blocks,
            disc_base_filters: gen_base_filters,
            disc_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<(), GanError> {
        self.generator_spec()
            .validate()
            .map_err(GanError::InvalidSpec)?;
        self.discriminator_spec()
            .validate()
            .map_err(GanError::InvalidSpec)?;
        Ok(())
    }

    pub fn generator_spec(&self) -> GeneratorSpec {
        GeneratorSpec {
            in_channels: self.image_channels,
            base_filters: self.gen_base_filters,
            residual_blocks: self.gen_residual_blocks,
        }
    }

    pub fn discriminator_spec(&self) -> DiscriminatorSpec {
        DiscriminatorSpec {
            in_channels: self.image_channels,
            base_filters: self.disc_base_filters,
            layers: self.disc_layers,
        }
    }
}

/// Training configuration. Defaults mirror the published setup:
/// lambda1 = lambda2 = 2, lambda3 = lambda4 = 1, lr 2e-4, 150 epochs,
/// batch size 1, log adversarial loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gan_loss_mode: GanLossMode,
    pub seed: u64,
    /// Adam betas; 0.5/0.999 is the usual GAN setting.
    pub beta1: f64,
    pub beta2: f64,
    /// Checkpoint cadence in epochs; 0 writes only the final epoch.
    pub checkpoint_every: usize,
    #[serde(default)]
    pub parallelism: Parallelism,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 2.0,
            lambda2: 2.0,
            lambda3: 1.0,
            lambda4: 1.0,
            learning_rate: 2e-4,
            epochs: 150,
            batch_size: 1,
            gan_loss_mode: GanLossMode::LogAdversarial,
            seed: 0,
            beta1: 0.5,
            beta2: 0.999,
            checkpoint_every: 0,
            parallelism: Parallelism::auto(),
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if [self.lambda1, self.lambda2, self.lambda3, self.lambda4]
            .iter()
            .any(|l| *l < 0.0 || !l.is_finite())
        {
            return Err(GanError::InvalidConfig("lambdas must be >= 0".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(GanError::InvalidConfig("learning rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(GanError::InvalidConfig(
                "epochs and batch size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Two generators and two discriminators.
///
/// `g_ab` maps WLI (domain A) to NBI (domain B), `g_ba` the reverse;
/// `d_a`/`d_b` judge realness in their own domain.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub g_ab: Generator,
    pub g_ba: Generator,
    pub d_a: PatchDiscriminator,
    pub d_b: PatchDiscriminator,
    pub spec: ArchitectureSpec,
}

impl GanModel {
    /// Identity-stub model: both generators pass inputs through unchanged.
    pub fn identity_stub() -> Self {
        let spec = ArchitectureSpec::desk(4, 1);
        Self {
            g_ab: Generator::Identity,
            g_ba: Generator::Identity,
            d_a: PatchDiscriminator::new("d_a", &spec.discriminator_spec(), 0),
            d_b: PatchDiscriminator::new("d_b", &spec.discriminator_spec(), 1),
            spec,
        }
    }

    /// Generators for a translation out of `origin` and back.
    pub fn direction(&self, origin: DomainTag) -> (&Generator, &Generator) {
        match origin {
            DomainTag::Wli => (&self.g_ab, &self.g_ba),
            DomainTag::Nbi => (&self.g_ba, &self.g_ab),
        }
    }

    pub fn checksum(&self) -> String {
        weights::checksum(self)
    }
}

impl Params for GanModel {
    fn visit(&self, f: &mut dyn FnMut(&str, &ArrayD<f64>)) {
        self.g_ab.visit(f);
        self.g_ba.visit(f);
        self.d_a.visit(f);
        self.d_b.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut ArrayD<f64>)) {
        self.g_ab.visit_mut(f);
        self.g_ba.visit_mut(f);
        self.d_a.visit_mut(f);
        self.d_b.visit_mut(f);
    }
}

/// Builds a freshly initialized model; deterministic in `seed`.
pub fn init_gan(spec: &ArchitectureSpec, seed: u64) -> Result<GanModel, GanError> {
    spec.validate()?;
    let stream = SeedStream::new(seed);
    Ok(GanModel {
        g_ab: Generator::net("g_ab", &spec.generator_spec(), stream.child("g_ab")),
        g_ba: Generator::net("g_ba", &spec.generator_spec(), stream.child("g_ba")),
        d_a: PatchDiscriminator::new("d_a", &spec.discriminator_spec(), stream.child("d_a")),
        d_b: PatchDiscriminator::new("d_b", &spec.discriminator_spec(), stream.child("d_b")),
        spec: *spec,
    })
}
