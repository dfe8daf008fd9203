//! Float raster types shared by every stage of the pipeline.
//!
//! Pixels live in `[0, 1]` as `f64`. Quantization to 8 bits happens only in
//! [`io`], when images touch the filesystem.

mod blur;
mod color;
pub mod io;

pub(crate) use blur::blur_plane;
pub use blur::{gaussian_blur, gaussian_blur_rgb, gaussian_kernel};
pub use color::{hsv_to_rgb, luma_of, rgb_to_hsv, LUMA_WEIGHTS};
pub use io::{load_gray, load_image, save_gray, save_image};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image has zero dimension ({width}x{height})")]
    ZeroDimension { width: usize, height: usize },
    #[error("buffer length {actual} does not match {width}x{height}x{channels}")]
    BufferLength {
        width: usize,
        height: usize,
        channels: usize,
        actual: usize,
    },
    #[error("pixel value {value} at index {index} is not a finite value in [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("unsupported image format for {0}")]
    UnsupportedFormat(String),
    #[error("failed to decode {path}: {message}")]
    Decode { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn check_dims(width: usize, height: usize) -> Result<(), ImageError> {
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension { width, height });
    }
    Ok(())
}

fn check_values(data: &[f64]) -> Result<(), ImageError> {
    match data
        .iter()
        .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
    {
        Some(index) => Err(ImageError::OutOfRange {
            index,
            value: data[index],
        }),
        None => Ok(()),
    }
}

/// Clamp to `[0, 1]`, mapping NaN to 0.
#[inline]
pub fn clamp01(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Three-channel image, row-major, interleaved RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageRgb {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height * 3 {
            return Err(ImageError::BufferLength {
                width,
                height,
                channels: 3,
                actual: data.len(),
            });
        }
        check_values(&data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Like [`ImageRgb::from_vec`] but clamps every value into `[0, 1]`.
    pub fn from_vec_clamped(
        width: usize,
        height: usize,
        mut data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self::from_vec(width, height, data)
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self, ImageError> {
        let px = rgb.map(clamp01);
        let data = std::iter::repeat_n(px, width * height).flatten().collect();
        Self::from_vec(width, height, data)
    }

    /// Build from a per-pixel function of `(x, y)`; results are clamped.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).map(clamp01));
            }
        }
        Self::from_vec(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Apply `f` to every pixel; outputs are clamped.
    pub fn map_pixels(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> ImageRgb {
        let data = self.pixels().flat_map(|p| f(p).map(clamp01)).collect();
        ImageRgb {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// Extract one channel as a gray image.
    pub fn channel(&self, c: usize) -> ImageGray {
        assert!(c < 3, "channel index {c} out of range");
        ImageGray {
            width: self.width,
            height: self.height,
            data: self.data.iter().skip(c).step_by(3).copied().collect(),
        }
    }

    /// Reassemble from three equally sized channels.
    pub fn from_channels(r: &ImageGray, g: &ImageGray, b: &ImageGray) -> Result<Self, ImageError> {
        ensure_same_dims(r.dims(), g.dims())?;
        ensure_same_dims(r.dims(), b.dims())?;
        let data = r
            .data
            .iter()
            .zip(&g.data)
            .zip(&b.data)
            .flat_map(|((&r, &g), &b)| [r, g, b])
            .collect();
        Self::from_vec(r.width, r.height, data)
    }

    /// Per-pixel Rec.601 luma.
    pub fn to_luma(&self) -> ImageGray {
        ImageGray {
            width: self.width,
            height: self.height,
            data: self.pixels().map(|p| clamp01(luma_of(p))).collect(),
        }
    }

    pub fn mean_luma(&self) -> f64 {
        self.to_luma().mean()
    }
}

/// Single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageGray {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(ImageError::BufferLength {
                width,
                height,
                channels: 1,
                actual: data.len(),
            });
        }
        check_values(&data)?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_vec_clamped(
        width: usize,
        height: usize,
        mut data: Vec<f64>,
    ) -> Result<Self, ImageError> {
        data.iter_mut().for_each(|v| *v = clamp01(*v));
        Self::from_vec(width, height, data)
    }

    pub fn filled(width: usize, height: usize, v: f64) -> Result<Self, ImageError> {
        Self::from_vec(width, height, vec![clamp01(v); width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, ImageError> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(clamp01(f(x, y)));
            }
        }
        Self::from_vec(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> ImageGray {
        ImageGray {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| clamp01(f(v))).collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn ensure_same_dims(
    left: (usize, usize),
    right: (usize, usize),
) -> Result<(), ImageError> {
    if left != right {
        return Err(ImageError::DimensionMismatch { left, right });
    }
    Ok(())
}
