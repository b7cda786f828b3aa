//! Experiment orchestration: run directories, benchmark data plumbing, the
//! published preset families, and the multi-seed ablation suite.

mod benchmark;
mod preset;
mod runs;
mod suite;

pub use benchmark::BenchmarkData;
pub use preset::{run_preset, ExperimentPreset, PresetConfig, PresetOutput};
pub use runs::RunDir;
pub use suite::{ablation_suite, SuiteCell, SuiteConfig, SuiteReport, METRIC_NAMES, STRATUM_NAMES};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("preset {0} requires a trained GAN checkpoint")]
    MissingGan(String),
    #[error("preset {0} requires a trained teacher checkpoint")]
    MissingTeacher(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("ablation suite needs at least one seed")]
    NoSeeds,
    #[error("benchmark directory is missing {0}")]
    IncompleteBenchmark(String),
    #[error(transparent)]
    Gan(#[from] crate::gan::GanError),
    #[error(transparent)]
    Classify(#[from] crate::classify::ClassifyError),
    #[error(transparent)]
    Eval(#[from] crate::evaluate::EvalError),
    #[error(transparent)]
    Data(#[from] crate::dataio::DataError),
    #[error(transparent)]
    Survey(#[from] crate::surveykit::SurveyError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
