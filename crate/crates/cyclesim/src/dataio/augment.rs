//! Training-time augmentation: random crop, right-angle rotation, flips.
//!
//! Draw order is fixed (crop, rotation, h-flip, v-flip) so a given
//! `(config, seed)` pair always produces the same output.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Random crop to this (height, width) before resizing back.
    pub crop: Option<(usize, usize)>,
    /// Random rotation by a multiple of 90 degrees.
    pub rotate90: bool,
    pub hflip: bool,
    pub vflip: bool,
    /// Output (training) shape.
    pub out_size: (usize, usize),
}

impl AugmentConfig {
    /// Everything disabled; output equals the (resized) input.
    pub fn disabled(out_size: (usize, usize)) -> Self {
        Self {
            crop: None,
            rotate90: false,
            hflip: false,
            vflip: false,
            out_size,
        }
    }

    /// The conventional trio: crop, rotation, flips.
    pub fn standard(out_size: (usize, usize)) -> Self {
        let crop_h = (out_size.0 * 7) / 8;
        let crop_w = (out_size.1 * 7) / 8;
        Self {
            crop: Some((crop_h.max(1), crop_w.max(1))),
            rotate90: true,
            hflip: true,
            vflip: false,
            out_size,
        }
    }
}

fn crop(data: &Array3<f64>, top: usize, left: usize, h: usize, w: usize) -> Array3<f64> {
    data.slice(ndarray::s![top..top + h, left..left + w, ..])
        .to_owned()
}

fn rot90_cw(data: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = data.dim();
    let mut out = Array3::<f64>::zeros((w, h, c));
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                out[[j, h - 1 - i, k]] = data[[i, j, k]];
            }
        }
    }
    out
}

fn flip_h(data: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = data.dim();
    let mut out = Array3::<f64>::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                out[[i, w - 1 - j, k]] = data[[i, j, k]];
            }
        }
    }
    out
}

fn flip_v(data: &Array3<f64>) -> Array3<f64> {
    let (h, w, c) = data.dim();
    let mut out = Array3::<f64>::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for k in 0..c {
                out[[h - 1 - i, j, k]] = data[[i, j, k]];
            }
        }
    }
    out
}

/// Bilinear resize for f64 HWC data; convex, so the value range is preserved.
pub(crate) fn resize_bilinear(data: &Array3<f64>, out_h: usize, out_w: usize) -> Array3<f64> {
    let (h, w, c) = data.dim();
    if (h, w) == (out_h, out_w) {
        return data.clone();
    }
    let mut out = Array3::<f64>::zeros((out_h, out_w, c));
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    for i in 0..out_h {
        let fy = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let dy = fy - y0 as f64;
        for j in 0..out_w {
            let fx = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let dx = fx - x0 as f64;
            for k in 0..c {
                let top = data[[y0, x0, k]] * (1.0 - dx) + data[[y0, x1, k]] * dx;
                let bot = data[[y1, x0, k]] * (1.0 - dx) + data[[y1, x1, k]] * dx;
                out[[i, j, k]] = top * (1.0 - dy) + bot * dy;
            }
        }
    }
    out
}

/// Applies the configured augmentations, seeded.
///
/// Pipeline: random crop -> random 90-degree rotation -> flips -> resize to
/// `config.out_size`. With everything disabled the output equals the
/// (resized) input exactly.
pub fn augment(
    image: &ImageTensor,
    config: &AugmentConfig,
    seed: u64,
) -> Result<ImageTensor, DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w, _) = image.data.dim();
    let mut data = image.data.clone();

    if let Some((ch, cw)) = config.crop {
        if ch > h || cw > w {
            return Err(DataError::CropTooLarge {
                crop: (ch, cw),
                image: (h, w),
            });
        }
        let top = rng.random_range(0..=h - ch);
        let left = rng.random_range(0..=w - cw);
        data = crop(&data, top, left, ch, cw);
    }
    if config.rotate90 {
        let k = rng.random_range(0..4u8);
        for _ in 0..k {
            data = rot90_cw(&data);
        }
    }
    if config.hflip && rng.random_range(0.0..1.0) < 0.5 {
        data = flip_h(&data);
    }
    if config.vflip && rng.random_range(0.0..1.0) < 0.5 {
        data = flip_v(&data);
    }
    data = resize_bilinear(&data, config.out_size.0, config.out_size.1);
    Ok(ImageTensor::new(data, image.range))
}
