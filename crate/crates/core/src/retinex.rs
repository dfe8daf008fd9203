//! Single-scale Retinex decomposition: `image = illumination × reflectance`.
//!
//! Illumination is the Gaussian-blurred Rec.601 luma, floored at
//! [`ILLUMINATION_FLOOR`]. Reflectance is the per-channel quotient, clamped to
//! `[0, REFLECTANCE_MAX]`.

use thiserror::Error;

use crate::imagecore::{self, gaussian_blur, ImageError, ImageGray, ImageRgb};

/// Lower bound on every illumination value.
pub const ILLUMINATION_FLOOR: f64 = 1e-3;
/// Upper bound on reflectance values.
pub const REFLECTANCE_MAX: f64 = 3.0;

#[derive(Debug, Error)]
pub enum RetinexError {
    #[error("blur sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("illumination value {value} at index {index} is outside [{floor}, 1]", floor = ILLUMINATION_FLOOR)]
    IlluminationRange { index: usize, value: f64 },
    #[error("reflectance value {value} at index {index} is outside [0, {max}]", max = REFLECTANCE_MAX)]
    ReflectanceRange { index: usize, value: f64 },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Reflectance image: three channels in `[0, REFLECTANCE_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflectance {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Reflectance {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self, RetinexError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension { width, height }.into());
        }
        if data.len() != width * height * 3 {
            return Err(ImageError::BufferLength {
                width,
                height,
                channels: 3,
                actual: data.len(),
            }
            .into());
        }
        if let Some(index) = data
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > REFLECTANCE_MAX)
        {
            return Err(RetinexError::ReflectanceRange {
                index,
                value: data[index],
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Values above 1 saturate; used for visualization.
    pub fn to_image_clamped(&self) -> ImageRgb {
        ImageRgb::from_vec_clamped(self.width, self.height, self.data.clone())
            .expect("dims already validated")
    }
}

impl From<&ImageRgb> for Reflectance {
    fn from(img: &ImageRgb) -> Self {
        Reflectance {
            width: img.width(),
            height: img.height(),
            data: img.data().to_vec(),
        }
    }
}

/// Illumination map plus reflectance whose product reconstructs the source.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinexPair {
    illumination: ImageGray,
    reflection: Reflectance,
}

impl RetinexPair {
    pub fn new(illumination: ImageGray, reflection: Reflectance) -> Result<Self, RetinexError> {
        imagecore::ensure_same_dims(illumination.dims(), reflection.dims())?;
        if let Some(index) = illumination
            .data()
            .iter()
            .position(|&v| v < ILLUMINATION_FLOOR)
        {
            return Err(RetinexError::IlluminationRange {
                index,
                value: illumination.data()[index],
            });
        }
        Ok(Self {
            illumination,
            reflection,
        })
    }

    pub fn illumination(&self) -> &ImageGray {
        &self.illumination
    }

    pub fn reflection(&self) -> &Reflectance {
        &self.reflection
    }

    pub fn dims(&self) -> (usize, usize) {
        self.illumination.dims()
    }

    /// `true` where no channel of the reflectance hit the upper clamp.
    pub fn unclamped_mask(&self, source: &ImageRgb) -> Vec<bool> {
        source
            .pixels()
            .zip(self.illumination.data())
            .map(|(p, &l)| p.iter().all(|&c| c / l <= REFLECTANCE_MAX))
            .collect()
    }
}

/// Split `img` into illumination and reflectance.
pub fn decompose(img: &ImageRgb, sigma: f64) -> Result<RetinexPair, RetinexError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(RetinexError::InvalidSigma(sigma));
    }
    let illumination = gaussian_blur(&img.to_luma(), sigma).map(|v| v.max(ILLUMINATION_FLOOR));
    let data = img
        .pixels()
        .zip(illumination.data())
        .flat_map(|(p, &l)| p.map(|c| (c / l).clamp(0.0, REFLECTANCE_MAX)))
        .collect();
    let reflection = Reflectance::from_vec(img.width(), img.height(), data)?;
    RetinexPair::new(illumination, reflection)
}

/// Multiply illumination back into the reflectance, clamped to `[0, 1]`.
pub fn reconstruct(pair: &RetinexPair) -> ImageRgb {
    recombine(&pair.illumination, &pair.reflection).expect("pair dims validated")
}

/// `clamp(illumination × reflectance)` for any illumination of matching size.
pub fn recombine(
    illumination: &ImageGray,
    reflection: &Reflectance,
) -> Result<ImageRgb, RetinexError> {
    imagecore::ensure_same_dims(illumination.dims(), reflection.dims())?;
    let data = reflection
        .data
        .chunks_exact(3)
        .zip(illumination.data())
        .flat_map(|(r, &l)| [r[0] * l, r[1] * l, r[2] * l])
        .collect();
    Ok(ImageRgb::from_vec_clamped(
        reflection.width,
        reflection.height,
        data,
    )?)
}
