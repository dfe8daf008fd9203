//! Brightness control: turn an illumination map and a requested ratio into a
//! per-pixel boost field, then apply it to the illumination.
//!
//! The boost field is mask-gated Gaussian smoothing of the initial map,
//! rescaled so its mask-weighted mean is exactly the requested strength.
//! Darker regions (high initial-map values) receive relatively more.

use thiserror::Error;

use crate::imagecore::{blur_plane, ensure_same_dims, ImageError, ImageGray};
use crate::retinex::ILLUMINATION_FLOOR;

/// Inclusive clip bounds applied after inversion.
pub const CLIP_RANGE: (f64, f64) = (0.05, 0.95);
/// Largest allowed per-pixel boost fraction and requested `|ratio|`.
pub const MAX_BOOST: f64 = 4.0;

#[derive(Debug, Error)]
pub enum BrightError {
    #[error("mask selects no pixels")]
    EmptyRegion,
    #[error("ratio {0} outside [-{MAX_BOOST}, {MAX_BOOST}]")]
    RatioOutOfRange(f64),
    #[error("spatial sigma must be >= 0, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostDirection {
    Brighten,
    Darken,
}

/// Per-pixel boost fractions in `[0, MAX_BOOST]` plus the direction to apply
/// them in.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    ratio: f64,
    scale: f64,
}

impl AdjustmentMap {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The signed ratio this map was built from.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Factor that brought the smoothed weights to a mean of 1.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn direction(&self) -> BoostDirection {
        if self.ratio < 0.0 {
            BoostDirection::Darken
        } else {
            BoostDirection::Brighten
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Heat-map view scaled so `MAX_BOOST` maps to white.
    pub fn to_heatmap(&self) -> ImageGray {
        ImageGray::from_vec_clamped(
            self.width,
            self.height,
            self.values.iter().map(|v| v / MAX_BOOST).collect(),
        )
        .expect("dims valid")
    }
}

/// Invert, clip to [`CLIP_RANGE`], subtract the mean, min-max normalize.
/// A constant result maps to 0.5 everywhere.
pub fn initial_map(illum: &ImageGray) -> ImageGray {
    let clipped: Vec<f64> = illum
        .data()
        .iter()
        .map(|&v| (1.0 - v).clamp(CLIP_RANGE.0, CLIP_RANGE.1))
        .collect();
    let mean = clipped.iter().sum::<f64>() / clipped.len() as f64;
    let centered: Vec<f64> = clipped.iter().map(|v| v - mean).collect();
    let lo = centered.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = centered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = if hi > lo {
        centered.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.5; centered.len()]
    };
    ImageGray::from_vec_clamped(illum.width(), illum.height(), data).expect("dims valid")
}

/// Build the boost field for `ratio` over the region selected by `mask`.
pub fn spatial_blend(
    m_init: &ImageGray,
    ratio: f64,
    mask: &ImageGray,
    sigma_s: f64,
) -> Result<AdjustmentMap, BrightError> {
    ensure_same_dims(m_init.dims(), mask.dims())?;
    if !(ratio.is_finite() && ratio.abs() <= MAX_BOOST) {
        return Err(BrightError::RatioOutOfRange(ratio));
    }
    if !(sigma_s >= 0.0 && sigma_s.is_finite()) {
        return Err(BrightError::InvalidSigma(sigma_s));
    }
    let mask_sum: f64 = mask.data().iter().sum();
    if mask_sum <= 0.0 {
        return Err(BrightError::EmptyRegion);
    }
    let (w, h) = m_init.dims();
    let gated: Vec<f64> = m_init
        .data()
        .iter()
        .zip(mask.data())
        .map(|(m, k)| m * k)
        .collect();
    let weights = blur_plane(&gated, w, h, sigma_s);
    let weighted_mean = weights
        .iter()
        .zip(mask.data())
        .map(|(v, k)| v * k)
        .sum::<f64>()
        / mask_sum;

    // A region whose initial map is zero everywhere gets a flat boost.
    let (weights, scale) = if weighted_mean > 0.0 {
        (weights, 1.0 / weighted_mean)
    } else {
        (vec![1.0; weights.len()], 1.0)
    };
    let magnitude = ratio.abs();
    let values = weights
        .iter()
        .zip(mask.data())
        .map(|(v, k)| (magnitude * v * scale * k).clamp(0.0, MAX_BOOST))
        .collect();
    Ok(AdjustmentMap {
        width: w,
        height: h,
        values,
        ratio,
        scale,
    })
}

/// Brighten: `L (1 + map)`; darken: `L / (1 + map)`; both clamped to
/// `[ILLUMINATION_FLOOR, 1]`.
pub fn apply_to_illumination(
    illum: &ImageGray,
    adj: &AdjustmentMap,
) -> Result<ImageGray, BrightError> {
    ensure_same_dims(illum.dims(), adj.dims())?;
    let darken = adj.direction() == BoostDirection::Darken;
    let data = illum
        .data()
        .iter()
        .zip(&adj.values)
        .map(|(&l, &m)| {
            let v = if darken { l / (1.0 + m) } else { l * (1.0 + m) };
            v.clamp(ILLUMINATION_FLOOR, 1.0)
        })
        .collect();
    Ok(ImageGray::from_vec(illum.width(), illum.height(), data)?)
}

/// Map a plan brightness ratio (effect multiplier `1 + ratio`) to the signed
/// strength [`spatial_blend`] expects, where darkening divides by
/// `1 + strength`.
pub fn control_strength(plan_ratio: f64) -> f64 {
    if plan_ratio >= 0.0 {
        plan_ratio
    } else {
        -(-plan_ratio / (1.0 + plan_ratio))
    }
}
