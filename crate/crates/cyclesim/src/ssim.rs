//! SSIM, covariance and MSE primitives shared by the GAN loss and the
//! evaluation harness.
//!
//! SSIM here is the global-statistics form: per-channel means, variances and
//! covariance over the whole plane, then averaged across the three channels.
//! A windowed variant is exposed as an extension ([`ssim_windowed`]) but the
//! loss and the default metrics use the global form.

use ndarray::ArrayView2;
use thiserror::Error;

use crate::dataio::{ImageTensor, ValueRange};

#[derive(Debug, Error, PartialEq)]
pub enum SsimError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("value range mismatch: {0:?} vs {1:?}")]
    RangeMismatch(ValueRange, ValueRange),
    #[error("invalid stabilizers: c1={c1}, c2={c2}")]
    InvalidParams { c1: f64, c2: f64 },
    #[error("covariance needs at least 2 pixels, got {0}")]
    TooFewPixels(usize),
}

/// SSIM stabilizing constants, `c1 = (k1 L)^2`, `c2 = (k2 L)^2`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SsimParams {
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    pub const K1: f64 = 0.01;
    pub const K2: f64 = 0.03;

    /// Standard constants for a dynamic range `l` (the value-range width).
    pub fn for_dynamic_range(l: f64) -> Self {
        Self {
            c1: (Self::K1 * l).powi(2),
            c2: (Self::K2 * l).powi(2),
        }
    }

    pub fn for_range(range: ValueRange) -> Self {
        Self::for_dynamic_range(range.width())
    }

    pub fn validate(&self) -> Result<(), SsimError> {
        if self.c1 > 0.0 && self.c2 > 0.0 {
            Ok(())
        } else {
            Err(SsimError::InvalidParams {
                c1: self.c1,
                c2: self.c2,
            })
        }
    }
}

/// Sample covariance of two equally sized planes, `1/(m-1) * sum((x-ux)(y-uy))`.
pub fn covariance(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64, SsimError> {
    if x.dim() != y.dim() {
        return Err(SsimError::ShapeMismatch(
            x.shape().to_vec(),
            y.shape().to_vec(),
        ));
    }
    let m = x.len();
    if m < 2 {
        return Err(SsimError::TooFewPixels(m));
    }
    let mx = x.sum() / m as f64;
    let my = y.sum() / m as f64;
    let mut acc = 0.0;
    for (&a, &b) in x.iter().zip(y.iter()) {
        acc += (a - mx) * (b - my);
    }
    Ok(acc / (m - 1) as f64)
}

/// Single-plane SSIM from global statistics.
fn ssim_plane(
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    params: SsimParams,
) -> Result<f64, SsimError> {
    let m = x.len();
    if m < 2 {
        return Err(SsimError::TooFewPixels(m));
    }
    let mx = x.sum() / m as f64;
    let my = y.sum() / m as f64;
    let vx = x.iter().map(|&v| (v - mx) * (v - mx)).sum::<f64>() / (m - 1) as f64;
    let vy = y.iter().map(|&v| (v - my) * (v - my)).sum::<f64>() / (m - 1) as f64;
    let cxy = covariance(x, y)?;
    Ok((2.0 * mx * my + params.c1) * (2.0 * cxy + params.c2)
        / ((mx * mx + my * my + params.c1) * (vx + vy + params.c2)))
}

/// Structural similarity between two images, averaged over channels.
///
/// Both images must share shape and declared value range. The result lies in
/// [-1, 1]; identical inputs give exactly 1 (stabilizers prevent 0/0 on
/// constant images).
pub fn ssim(x: &ImageTensor, y: &ImageTensor, params: SsimParams) -> Result<f64, SsimError> {
    params.validate()?;
    if x.data.dim() != y.data.dim() {
        return Err(SsimError::ShapeMismatch(
            x.data.shape().to_vec(),
            y.data.shape().to_vec(),
        ));
    }
    if x.range != y.range {
        return Err(SsimError::RangeMismatch(x.range, y.range));
    }
    let mut total = 0.0;
    for c in 0..3 {
        let xc = x.data.index_axis(ndarray::Axis(2), c);
        let yc = y.data.index_axis(ndarray::Axis(2), c);
        total += ssim_plane(xc, yc, params)?;
    }
    Ok(total / 3.0)
}

/// SSIM with default constants derived from the images' declared range.
pub fn ssim_default(x: &ImageTensor, y: &ImageTensor) -> Result<f64, SsimError> {
    ssim(x, y, SsimParams::for_range(x.range))
}

/// Windowed-SSIM extension: mean of global SSIM over non-overlapping
/// `window` x `window` tiles. Not used by the loss.
pub fn ssim_windowed(
    x: &ImageTensor,
    y: &ImageTensor,
    params: SsimParams,
    window: usize,
) -> Result<f64, SsimError> {
    params.validate()?;
    if x.data.dim() != y.data.dim() {
        return Err(SsimError::ShapeMismatch(
            x.data.shape().to_vec(),
            y.data.shape().to_vec(),
        ));
    }
    if x.range != y.range {
        return Err(SsimError::RangeMismatch(x.range, y.range));
    }
    let (h, w, _) = x.data.dim();
    let window = window.max(2);
    let mut total = 0.0;
    let mut tiles = 0usize;
    let mut i = 0;
    while i + window <= h {
        let mut j = 0;
        while j + window <= w {
            for c in 0..3 {
                let xs = x.data.slice(ndarray::s![i..i + window, j..j + window, c]);
                let ys = y.data.slice(ndarray::s![i..i + window, j..j + window, c]);
                total += ssim_plane(xs, ys, params)?;
                tiles += 1;
            }
            j += window;
        }
        i += window;
    }
    if tiles == 0 {
        return ssim(x, y, params);
    }
    Ok(total / tiles as f64)
}

/// Mean squared error over all pixels and channels.
pub fn mse(x: &ImageTensor, y: &ImageTensor) -> Result<f64, SsimError> {
    if x.data.dim() != y.data.dim() {
        return Err(SsimError::ShapeMismatch(
            x.data.shape().to_vec(),
            y.data.shape().to_vec(),
        ));
    }
    let n = x.data.len() as f64;
    let mut acc = 0.0;
    for (&a, &b) in x.data.iter().zip(y.data.iter()) {
        acc += (a - b) * (a - b);
    }
    Ok(acc / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr2, Array3};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    fn img_from_fn(h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> ImageTensor {
        ImageTensor::new(
            Array3::from_shape_fn((h, w, 3), |(i, j, c)| f(i, j, c)),
            ValueRange::Unit,
        )
    }

    fn random_img(h: usize, w: usize, seed: u64) -> ImageTensor {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        img_from_fn(h, w, |_, _, _| rng.random_range(0.0..1.0))
    }

    /// Independent direct-formula oracle, coded from the definition without
    /// sharing any helper with the implementation.
    fn ssim_oracle(x: &ImageTensor, y: &ImageTensor, c1: f64, c2: f64) -> f64 {
        let (h, w, _) = x.data.dim();
        let m = (h * w) as f64;
        let mut acc = 0.0;
        for c in 0..3 {
            let mut sx = 0.0;
            let mut sy = 0.0;
            for i in 0..h {
                for j in 0..w {
                    sx += x.data[[i, j, c]];
                    sy += y.data[[i, j, c]];
                }
            }
            let mx = sx / m;
            let my = sy / m;
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..h {
                for j in 0..w {
                    let dx = x.data[[i, j, c]] - mx;
                    let dy = y.data[[i, j, c]] - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            vx /= m - 1.0;
            vy /= m - 1.0;
            cov /= m - 1.0;
            acc += (2.0 * mx * my + c1) * (2.0 * cov + c2)
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
        acc / 3.0
    }

    #[test]
    fn identity_gives_exactly_one() {
        for seed in 0..5 {
            let x = random_img(7, 9, seed);
            let v = ssim_default(&x, &x).unwrap();
            assert!((v - 1.0).abs() < 1e-12, "ssim(x,x)={v}");
        }
        // Constant images too: the stabilizers avoid 0/0.
        let c = img_from_fn(4, 4, |_, _, _| 0.3);
        assert!((ssim_default(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_images_match_closed_form() {
        // x constant 0.2, y constant 0.8, unit range: variances and covariance
        // vanish, SSIM = (2*0.2*0.8+c1)*c2 / ((0.04+0.64+c1)*c2).
        let x = img_from_fn(8, 8, |_, _, _| 0.2);
        let y = img_from_fn(8, 8, |_, _, _| 0.8);
        let params = SsimParams::for_dynamic_range(1.0);
        let expected =
            (2.0 * 0.2 * 0.8 + params.c1) / (0.2f64.powi(2) + 0.8f64.powi(2) + params.c1);
        let got = ssim(&x, &y, params).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn matches_direct_formula_oracle_on_random_pairs() {
        let params = SsimParams::for_dynamic_range(1.0);
        for seed in 0..100 {
            let x = random_img(8, 8, 2 * seed);
            let y = random_img(8, 8, 2 * seed + 1);
            let got = ssim(&x, &y, params).unwrap();
            let want = ssim_oracle(&x, &y, params.c1, params.c2);
            assert!((got - want).abs() < 1e-6, "seed {seed}: {got} vs {want}");
        }
    }

    #[test]
    fn covariance_hand_cases() {
        // Self-covariance is the sample variance.
        let x = arr2(&[[1.0, 2.0], [3.0, 4.0]]);
        let var = covariance(x.view(), x.view()).unwrap();
        let mean = 2.5;
        let expect = [1.0f64, 2.0, 3.0, 4.0]
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / 3.0;
        assert!((var - expect).abs() < 1e-12);

        // x=[0,1], y=[1,0] -> -0.5.
        let a = arr2(&[[0.0, 1.0]]);
        let b = arr2(&[[1.0, 0.0]]);
        assert!((covariance(a.view(), b.view()).unwrap() + 0.5).abs() < 1e-12);

        // Constant x has zero covariance against anything.
        let c = arr2(&[[0.7, 0.7], [0.7, 0.7]]);
        let d = arr2(&[[0.0, 0.3], [0.9, 0.1]]);
        assert_eq!(covariance(c.view(), d.view()).unwrap(), 0.0);

        assert_eq!(
            covariance(arr2(&[[1.0]]).view(), arr2(&[[2.0]]).view()),
            Err(SsimError::TooFewPixels(1))
        );
    }

    #[test]
    fn mse_hand_cases_and_loop_oracle() {
        let x = random_img(6, 5, 1);
        assert_eq!(mse(&x, &x).unwrap(), 0.0);

        let zero = img_from_fn(4, 4, |_, _, _| 0.0);
        let half = img_from_fn(4, 4, |_, _, _| 0.5);
        assert!((mse(&zero, &half).unwrap() - 0.25).abs() < 1e-15);

        let y = random_img(6, 5, 2);
        let mut acc = 0.0;
        for i in 0..6 {
            for j in 0..5 {
                for c in 0..3 {
                    let d = x.data[[i, j, c]] - y.data[[i, j, c]];
                    acc += d * d;
                }
            }
        }
        let want = acc / (6.0 * 5.0 * 3.0);
        assert!((mse(&x, &y).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn shape_and_range_mismatches_are_errors() {
        let x = random_img(4, 4, 1);
        let y = random_img(4, 5, 2);
        assert!(matches!(
            ssim_default(&x, &y),
            Err(SsimError::ShapeMismatch(_, _))
        ));
        let z = random_img(4, 4, 3).convert_range(ValueRange::Symmetric);
        assert!(matches!(
            ssim_default(&x, &z),
            Err(SsimError::RangeMismatch(_, _))
        ));
        assert!(matches!(mse(&x, &y), Err(SsimError::ShapeMismatch(_, _))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn ssim_is_symmetric_and_bounded(seed_a in 0u64..5000, seed_b in 0u64..5000) {
            let x = random_img(6, 6, seed_a);
            let y = random_img(6, 6, seed_b);
            let ab = ssim_default(&x, &y).unwrap();
            let ba = ssim_default(&y, &x).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            prop_assert!(ab.abs() <= 1.0 + 1e-12);
        }

        #[test]
        fn covariance_is_bilinear_in_scale(seed in 0u64..5000, alpha in -3.0f64..3.0) {
            let x = random_img(5, 5, seed);
            let y = random_img(5, 5, seed + 10000);
            let xc = x.data.index_axis(ndarray::Axis(2), 0);
            let yc = y.data.index_axis(ndarray::Axis(2), 0);
            let base = covariance(xc, yc).unwrap();
            let scaled_plane = xc.mapv(|v| alpha * v);
            let scaled = covariance(scaled_plane.view(), yc).unwrap();
            prop_assert!((scaled - alpha * base).abs() < 1e-9);
        }
    }
}
