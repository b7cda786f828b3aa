//! Image tensors: loading, value ranges, batch conversion.
//!
//! GAN paths run in the symmetric [-1, 1] range (tanh generators); metric
//! computation uses the unit [0, 1] range. Every tensor declares its range
//! so the two never mix silently.

use std::path::Path;

use ndarray::{Array3, Array4, ArrayView3, Axis};

use super::{DataError, ImageRecord};

/// Declared pixel value range of an [`ImageTensor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueRange {
    /// [0, 1]
    Unit,
    /// [-1, 1]
    Symmetric,
}

impl ValueRange {
    pub fn bounds(self) -> (f64, f64) {
        match self {
            ValueRange::Unit => (0.0, 1.0),
            ValueRange::Symmetric => (-1.0, 1.0),
        }
    }

    /// Width of the range; the SSIM dynamic range `L`.
    pub fn width(self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }
}

/// An H x W x 3 image with a declared value range.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub data: Array3<f64>,
    pub range: ValueRange,
}

impl ImageTensor {
    pub fn new(data: Array3<f64>, range: ValueRange) -> Self {
        debug_assert_eq!(data.dim().2, 3, "image tensors are HWC with 3 channels");
        Self { data, range }
    }

    /// (height, width)
    pub fn hw(&self) -> (usize, usize) {
        let (h, w, _) = self.data.dim();
        (h, w)
    }

    /// True when every entry lies inside the declared range.
    pub fn in_range(&self) -> bool {
        let (lo, hi) = self.range.bounds();
        self.data.iter().all(|&v| v >= lo && v <= hi)
    }

    /// Affine rescale into the target range.
    pub fn convert_range(&self, target: ValueRange) -> ImageTensor {
        if self.range == target {
            return self.clone();
        }
        let (slo, shi) = self.range.bounds();
        let (tlo, thi) = target.bounds();
        let scale = (thi - tlo) / (shi - slo);
        ImageTensor {
            data: self.data.mapv(|v| (v - slo) * scale + tlo),
            range: target,
        }
    }

    /// CHW view of this image as an owned array.
    pub fn to_chw(&self) -> Array3<f64> {
        let (h, w, _) = self.data.dim();
        let mut out = Array3::<f64>::zeros((3, h, w));
        for c in 0..3 {
            for i in 0..h {
                for j in 0..w {
                    out[[c, i, j]] = self.data[[i, j, c]];
                }
            }
        }
        out
    }

    pub fn from_chw(chw: ArrayView3<f64>, range: ValueRange) -> ImageTensor {
        let (_, h, w) = chw.dim();
        let mut data = Array3::<f64>::zeros((h, w, 3));
        for c in 0..3 {
            for i in 0..h {
                for j in 0..w {
                    data[[i, j, c]] = chw[[c, i, j]];
                }
            }
        }
        ImageTensor { data, range }
    }
}

/// Stacks images into an NCHW batch. All images must share shape and range.
pub fn batch_nchw(images: &[&ImageTensor]) -> Array4<f64> {
    assert!(!images.is_empty(), "empty batch");
    let (h, w) = images[0].hw();
    let range = images[0].range;
    let mut out = Array4::<f64>::zeros((images.len(), 3, h, w));
    for (n, img) in images.iter().enumerate() {
        assert_eq!(img.hw(), (h, w), "batch images must share shape");
        assert_eq!(img.range, range, "batch images must share value range");
        out.index_axis_mut(Axis(0), n).assign(&img.to_chw());
    }
    out
}

/// Splits an NCHW batch back into images.
pub fn unbatch_nchw(batch: &Array4<f64>, range: ValueRange) -> Vec<ImageTensor> {
    (0..batch.dim().0)
        .map(|n| ImageTensor::from_chw(batch.index_axis(Axis(0), n), range))
        .collect()
}

/// Decodes, resizes and rescales the image behind a record.
pub fn load_image(
    record: &ImageRecord,
    size: (usize, usize),
    range: ValueRange,
) -> Result<ImageTensor, DataError> {
    load_image_from_path(&record.image_path, size, range)
}

/// Decodes an image file into an `(H, W)`-sized tensor in the given range.
pub fn load_image_from_path(
    path: &Path,
    size: (usize, usize),
    range: ValueRange,
) -> Result<ImageTensor, DataError> {
    let img = image::open(path).map_err(|e| DataError::ImageDecode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    if rgb.width() == 0 || rgb.height() == 0 {
        return Err(DataError::ZeroArea(path.to_path_buf()));
    }
    let (h, w) = size;
    let resized = if (rgb.height() as usize, rgb.width() as usize) == (h, w) {
        rgb
    } else {
        image::imageops::resize(
            &rgb,
            w as u32,
            h as u32,
            image::imageops::FilterType::Triangle,
        )
    };
    let mut data = Array3::<f64>::zeros((h, w, 3));
    for i in 0..h {
        for j in 0..w {
            let px = resized.get_pixel(j as u32, i as u32);
            for c in 0..3 {
                data[[i, j, c]] = px.0[c] as f64 / 255.0;
            }
        }
    }
    let unit = ImageTensor::new(data, ValueRange::Unit);
    Ok(unit.convert_range(range))
}

/// Writes a tensor as an 8-bit PNG (values clamped into range first).
pub fn save_png(image: &ImageTensor, path: &Path) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let unit = image.convert_range(ValueRange::Unit);
    let (h, w) = unit.hw();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let px = [
                (unit.data[[i, j, 0]].clamp(0.0, 1.0) * 255.0).round() as u8,
                (unit.data[[i, j, 1]].clamp(0.0, 1.0) * 255.0).round() as u8,
                (unit.data[[i, j, 2]].clamp(0.0, 1.0) * 255.0).round() as u8,
            ];
            buf.put_pixel(j as u32, i as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(|e| DataError::ImageDecode {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_test_png(dir: &Path, name: &str, w: u32, h: u32, value: u8) -> std::path::PathBuf {
        let path = dir.join(name);
        let buf = image::RgbImage::from_pixel(w, h, image::Rgb([value, value, value]));
        buf.save(&path).unwrap();
        path
    }

    #[test]
    fn range_endpoints_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let white = write_test_png(dir.path(), "white.png", 4, 4, 255);
        let black = write_test_png(dir.path(), "black.png", 4, 4, 0);
        let unit = load_image_from_path(&white, (4, 4), ValueRange::Unit).unwrap();
        assert_eq!(unit.data[[0, 0, 0]], 1.0);
        let sym = load_image_from_path(&black, (4, 4), ValueRange::Symmetric).unwrap();
        assert_eq!(sym.data[[0, 0, 0]], -1.0);
    }

    #[test]
    fn resize_respects_requested_shape() {
        let dir = tempfile::tempdir().unwrap();
        let src = write_test_png(dir.path(), "wide.png", 200, 100, 128);
        let img = load_image_from_path(&src, (64, 64), ValueRange::Unit).unwrap();
        assert_eq!(img.data.dim(), (64, 64, 3));
        assert!(img.in_range());
    }

    #[test]
    fn decode_failure_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not a png").unwrap();
        assert!(matches!(
            load_image_from_path(&path, (4, 4), ValueRange::Unit),
            Err(DataError::ImageDecode { .. })
        ));
    }

    #[test]
    fn chw_round_trip_and_batching() {
        let data = Array3::from_shape_fn((3, 5, 3), |(i, j, c)| (i + 10 * j + 100 * c) as f64);
        let img = ImageTensor::new(data, ValueRange::Unit);
        let back = ImageTensor::from_chw(img.to_chw().view(), ValueRange::Unit);
        assert_eq!(back, img);
        let batch = batch_nchw(&[&img, &img]);
        assert_eq!(batch.dim(), (2, 3, 3, 5));
        assert_eq!(batch[[1, 2, 0, 1]], img.data[[0, 1, 2]]);
        let list = unbatch_nchw(&batch, ValueRange::Unit);
        assert_eq!(list[0], img);
    }

    #[test]
    fn range_conversion_is_affine_involution() {
        let data = Array3::from_shape_fn((2, 2, 3), |(i, j, c)| (i + j + c) as f64 / 6.0);
        let img = ImageTensor::new(data, ValueRange::Unit);
        let sym = img.convert_range(ValueRange::Symmetric);
        assert!((sym.data[[0, 0, 0]] - (-1.0)).abs() < 1e-12);
        let back = sym.convert_range(ValueRange::Unit);
        for (a, b) in back.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn png_round_trip_preserves_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let data = Array3::from_shape_fn((6, 6, 3), |(i, j, c)| {
            ((i * 37 + j * 11 + c * 5) % 256) as f64 / 255.0
        });
        let img = ImageTensor::new(data, ValueRange::Unit);
        let path = dir.path().join("rt.png");
        save_png(&img, &path).unwrap();
        let loaded = load_image_from_path(&path, (6, 6), ValueRange::Unit).unwrap();
        for (a, b) in loaded.data.iter().zip(img.data.iter()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-12);
        }
    }
}
