//! Feature extraction for FID.
//!
//! The extractor is pluggable by id. The bundled `toy` extractor is a
//! deterministic fixed random projection over pooled image patches; it
//! stands in for an inception-scale pretrained network, which is out of
//! reach for a desk-scale build and would plug in through the same
//! interface.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{ImageTensor, ValueRange};
use crate::par::{self, Parallelism};

use super::{EvalError, GaussianStats};

pub const TOY_EXTRACTOR: &str = "toy";

const TOY_POOL: usize = 8;
const TOY_DIM: usize = 16;
const TOY_PROJECTION_SEED: u64 = 0xF1D0_57A7;

/// Per-image feature rows with cached summary statistics.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub features: Array2<f64>,
    pub extractor_id: String,
    mean: Array1<f64>,
    cov: Array2<f64>,
}

impl FeatureSet {
    /// Builds the set, computing mean and sample covariance once.
    pub fn from_features(features: Array2<f64>, extractor_id: &str) -> Result<Self, EvalError> {
        let n = features.nrows();
        if n < 2 {
            return Err(EvalError::TooFewSamples(n));
        }
        let d = features.ncols();
        let mean = features.sum_axis(ndarray::Axis(0)) / n as f64;
        let mut cov = Array2::<f64>::zeros((d, d));
        for row in features.rows() {
            for i in 0..d {
                let di = row[i] - mean[i];
                for j in i..d {
                    cov[[i, j]] += di * (row[j] - mean[j]);
                }
            }
        }
        let denom = (n - 1) as f64;
        for i in 0..d {
            for j in i..d {
                cov[[i, j]] /= denom;
                cov[[j, i]] = cov[[i, j]];
            }
        }
        Ok(Self {
            features,
            extractor_id: extractor_id.to_string(),
            mean,
            cov,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &Array2<f64> {
        &self.cov
    }

    pub fn stats(&self) -> GaussianStats {
        GaussianStats {
            mean: self.mean.clone(),
            cov: self.cov.clone(),
        }
    }
}

/// Fixed projection matrix shared by every toy extraction.
fn toy_projection() -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(TOY_PROJECTION_SEED);
    let rows = TOY_POOL * TOY_POOL * 3;
    let scale = 1.0 / (rows as f64).sqrt();
    Array2::from_shape_simple_fn((rows, TOY_DIM), || rng.random_range(-1.0..1.0) * scale)
}

/// Block-average pooling of one channel onto a TOY_POOL grid.
fn pooled_vector(img: &ImageTensor) -> Array1<f64> {
    let unit = img.convert_range(ValueRange::Unit);
    let (h, w, _) = unit.data.dim();
    let mut out = Array1::<f64>::zeros(TOY_POOL * TOY_POOL * 3);
    for c in 0..3 {
        for bi in 0..TOY_POOL {
            for bj in 0..TOY_POOL {
                let i0 = bi * h / TOY_POOL;
                let i1 = ((bi + 1) * h / TOY_POOL).max(i0 + 1).min(h);
                let j0 = bj * w / TOY_POOL;
                let j1 = ((bj + 1) * w / TOY_POOL).max(j0 + 1).min(w);
                let mut acc = 0.0;
                for i in i0..i1 {
                    for j in j0..j1 {
                        acc += unit.data[[i, j, c]];
                    }
                }
                out[(c * TOY_POOL + bi) * TOY_POOL + bj] =
                    acc / ((i1 - i0) * (j1 - j0)) as f64;
            }
        }
    }
    out
}

/// Extracts one feature row per image; summary stats are computed once and
/// cached in the returned set.
pub fn extract_features(
    images: &[ImageTensor],
    extractor_id: &str,
    parallelism: Parallelism,
) -> Result<FeatureSet, EvalError> {
    if extractor_id != TOY_EXTRACTOR {
        return Err(EvalError::UnknownExtractor(extractor_id.to_string()));
    }
    if images.len() < 2 {
        return Err(EvalError::TooFewSamples(images.len()));
    }
    let projection = toy_projection();
    let rows = par::map_indexed(parallelism, images.len(), |i| {
        let pooled = pooled_vector(&images[i]);
        let projected = pooled.dot(&projection);
        projected.mapv(f64::tanh)
    });
    let mut features = Array2::<f64>::zeros((images.len(), TOY_DIM));
    for (i, row) in rows.into_iter().enumerate() {
        features.row_mut(i).assign(&row);
    }
    FeatureSet::from_features(features, extractor_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array3};

    fn img(seed: u64) -> ImageTensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageTensor::new(
            Array3::from_shape_simple_fn((16, 16, 3), || rng.random_range(0.0..1.0)),
            ValueRange::Unit,
        )
    }

    #[test]
    fn duplicated_images_have_zero_covariance() {
        let x = img(1);
        let set = extract_features(
            &[x.clone(), x.clone(), x],
            TOY_EXTRACTOR,
            Parallelism::Sequential,
        )
        .unwrap();
        assert!(set.cov().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn hand_computed_stats() {
        let features = arr2(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]);
        let set = FeatureSet::from_features(features, "manual").unwrap();
        assert_eq!(set.mean()[0], 1.0);
        assert_eq!(set.mean()[1], 0.0);
        assert_eq!(set.cov()[[0, 0]], 1.0);
        assert_eq!(set.cov()[[0, 1]], 0.0);
        assert_eq!(set.cov()[[1, 1]], 0.0);
    }

    #[test]
    fn toy_extractor_is_deterministic() {
        let imgs: Vec<ImageTensor> = (0..4).map(img).collect();
        let a = extract_features(&imgs, TOY_EXTRACTOR, Parallelism::Sequential).unwrap();
        let b = extract_features(&imgs, TOY_EXTRACTOR, Parallelism::auto()).unwrap();
        assert_eq!(a.features, b.features);
        assert_eq!(a.dim(), TOY_DIM);
    }

    #[test]
    fn unknown_extractor_and_small_sets_error() {
        let imgs: Vec<ImageTensor> = (0..2).map(img).collect();
        assert!(matches!(
            extract_features(&imgs, "inception-v3", Parallelism::Sequential),
            Err(EvalError::UnknownExtractor(_))
        ));
        assert!(matches!(
            extract_features(&imgs[..1], TOY_EXTRACTOR, Parallelism::Sequential),
            Err(EvalError::TooFewSamples(1))
        ));
    }

    #[test]
    fn covariance_is_symmetric_for_random_sets() {
        let imgs: Vec<ImageTensor> = (0..12).map(img).collect();
        let set = extract_features(&imgs, TOY_EXTRACTOR, Parallelism::Sequential).unwrap();
        let c = set.cov();
        for i in 0..set.dim() {
            for j in 0..set.dim() {
                assert!((c[[i, j]] - c[[j, i]]).abs() < 1e-8);
            }
        }
    }
}
