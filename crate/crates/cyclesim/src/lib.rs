//! Unpaired two-domain image translation with a cycle-consistency GAN and a
//! structural-similarity loss, plus teacher/student pseudo-labeling over
//! translation triples and the full quantitative evaluation battery.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`dataio`] — dataset manifests, patient-level splits, GAN dataset
//!   composition, image loading and augmentation.
//! - [`ssim`] — SSIM, covariance and MSE primitives shared by the GAN loss
//!   and the evaluation harness.
//! - [`nn`] — a small reverse-mode autodiff engine (f64, NCHW) that backs
//!   every trainable model in the crate.
//! - [`gan`] — generators, discriminators, the four losses, the training
//!   loop and translation-triple generation.
//! - [`classify`] — teacher classifier, multi-input student, pseudo-labels
//!   and the supervised/semi-supervised training loops.
//! - [`evaluate`] — FID, noise-sensitivity curves, classification reports
//!   and significance testing.
//! - [`surveykit`] — specialist-evaluation manifests and response scoring.
//! - [`experiment`] — run directories, presets and the ablation suite.
//! - [`synth`] — seeded synthetic datasets for desk-scale runs.

pub mod classify;
pub mod dataio;
pub mod evaluate;
pub mod experiment;
pub mod gan;
pub mod nn;
pub mod par;
pub mod seed;
pub mod ssim;
pub mod surveykit;
pub mod synth;

pub use par::Parallelism;
