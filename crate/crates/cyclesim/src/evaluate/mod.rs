//! The evaluation battery: FID, noise-sensitivity curves, classification
//! reports stratified by domain, and significance testing.

mod features;
mod fid;
mod mwu;
mod report;
mod sensitivity;

pub use features::{extract_features, FeatureSet, TOY_EXTRACTOR};
pub use fid::{fid, GaussianStats};
pub use mwu::mann_whitney_u;
pub use report::{
    classification_report, classification_report_with, per_domain_report, AveragingMode,
    MetricsReport, PerClassMetrics, PerDomainReports,
};
pub use sensitivity::{curve_auc, sensitivity_curve, SensitivityCurve, DEFAULT_SIGMAS};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {left} predictions vs {right} truths")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("truth labels must be one of the four tissue classes")]
    UnlabeledTruth,
    #[error("covariance is not symmetric within tolerance")]
    NotSymmetric,
    #[error("matrix square root failed on indefinite input: {0}")]
    NotPsd(String),
    #[error("unknown feature extractor {0:?} (bundled: \"toy\"; inception-scale extractors are external)")]
    UnknownExtractor(String),
    #[error("feature extraction needs at least 2 images, got {0}")]
    TooFewSamples(usize),
    #[error("sensitivity curve needs at least 2 points for an AUC")]
    SinglePoint,
    #[error("sigmas must be non-empty and strictly increasing")]
    BadSigmas,
    #[error("significance test received an empty sample")]
    EmptySample,
    #[error(transparent)]
    Gan(#[from] crate::gan::GanError),
    #[error(transparent)]
    Ssim(#[from] crate::ssim::SsimError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Evaluation stratum: everything, or one imaging domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    #[serde(rename = "ALL")]
    All,
    #[serde(rename = "WLI")]
    Wli,
    #[serde(rename = "NBI")]
    Nbi,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::All => "ALL",
            Stratum::Wli => "WLI",
            Stratum::Nbi => "NBI",
        })
    }
}

/// How a two-sample p-value was computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceMethod {
    Exact,
    NormalApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: SignificanceMethod,
}
