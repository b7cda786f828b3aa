//! Noise-sensitivity curves: reconstruction MSE after injecting Gaussian
//! noise into the intermediate translation, and their AUC.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataio::{DomainTag, ImageTensor};
use crate::gan::{translate_oneway, GanModel};
use crate::par::{self, Parallelism};
use crate::seed::SeedStream;
use crate::ssim::mse;

use super::EvalError;

/// The evaluated noise levels used throughout the experiments.
pub const DEFAULT_SIGMAS: [f64; 5] = [0.025, 0.05, 0.075, 0.1, 0.2];

/// (sigma, mean reconstruction MSE) pairs over a strictly increasing sigma
/// grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurve {
    pub points: Vec<(f64, f64)>,
}

impl SensitivityCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, EvalError> {
        if points.is_empty() {
            return Err(EvalError::BadSigmas);
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(EvalError::BadSigmas);
            }
        }
        if points.iter().any(|(s, v)| *s < 0.0 || *v < 0.0) {
            return Err(EvalError::BadSigmas);
        }
        Ok(Self { points })
    }

    pub fn sigmas(&self) -> Vec<f64> {
        self.points.iter().map(|(s, _)| *s).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|(_, v)| *v).collect()
    }

    /// CSV with header `sigma,sn`.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut text = String::from("sigma,sn\n");
        for (s, v) in &self.points {
            text.push_str(&format!("{s},{v}\n"));
        }
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Sensitivity of a frozen model: for each sigma, the mean over images of
/// `MSE(G_p(G_q(x) + N(0, sigma)), x)`.
///
/// Noise is seeded per (sigma, image) and injected into the translation
/// before reconstruction, with no clamping afterwards. Values are reported
/// in the images' declared pixel range.
pub fn sensitivity_curve(
    model: &GanModel,
    images: &[(ImageTensor, DomainTag)],
    sigmas: &[f64],
    seed: u64,
    parallelism: Parallelism,
) -> Result<SensitivityCurve, EvalError> {
    if images.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if sigmas.is_empty() {
        return Err(EvalError::BadSigmas);
    }
    for w in sigmas.windows(2) {
        if w[1] <= w[0] {
            return Err(EvalError::BadSigmas);
        }
    }
    let stream = SeedStream::new(seed);
    let mut points = Vec::with_capacity(sigmas.len());
    for (k, &sigma) in sigmas.iter().enumerate() {
        let errors = par::map_indexed(parallelism, images.len(), |i| {
            let (image, origin) = &images[i];
            let translated = translate_oneway(model, image, *origin)?;
            let noisy = if sigma > 0.0 {
                let mut rng = stream.rng_indexed("noise", (k * images.len() + i) as u64);
                let dist = Normal::new(0.0, sigma).expect("positive sigma");
                let mut data = translated.data.clone();
                data.mapv_inplace(|v| v + dist.sample(&mut rng));
                ImageTensor::new(data, translated.range)
            } else {
                translated
            };
            let reconstructed = translate_oneway(model, &noisy, origin.opposite())?;
            Ok::<f64, EvalError>(mse(&reconstructed, image)?)
        });
        let mut total = 0.0;
        for e in errors {
            total += e?;
        }
        points.push((sigma, total / images.len() as f64));
    }
    SensitivityCurve::new(points)
}

/// Trapezoidal AUC of a sensitivity curve over its sigma grid.
///
/// `raw = true` (the default everywhere) integrates as-is; `raw = false`
/// rescales by `1000 / (sigma_max - sigma_min)`. AUC magnitudes are only
/// comparable within one build and pixel range.
pub fn curve_auc(curve: &SensitivityCurve, raw: bool) -> Result<f64, EvalError> {
    if curve.points.len() < 2 {
        return Err(EvalError::SinglePoint);
    }
    let mut auc = 0.0;
    for w in curve.points.windows(2) {
        let (s0, v0) = w[0];
        let (s1, v1) = w[1];
        auc += (s1 - s0) * (v0 + v1) / 2.0;
    }
    if raw {
        Ok(auc)
    } else {
        let span = curve.points.last().unwrap().0 - curve.points[0].0;
        Ok(auc / span * 1000.0)
    }
}
