//! Color adjustment operators.
//!
//! Every operator is a pure, dimension-preserving function of the whole
//! image. Ops have a canonical text form (`saturation:+0.25`) and a recipe is
//! a `|`-separated list of them.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::imagecore::{self, gaussian_blur, hsv_to_rgb, luma_of, rgb_to_hsv, ImageGray, ImageRgb};

pub const FRACTION_RANGE: (f64, f64) = (-0.9, 4.0);
pub const GAMMA_RANGE: (f64, f64) = (0.2, 5.0);
pub const RADIUS_RANGE: (f64, f64) = (0.5, 16.0);
pub const HUE_RANGE: (f64, f64) = (-180.0, 180.0);
pub const MAX_COMPOSE_LEN: usize = 8;
/// Radius used by `sharpen` when none is given.
pub const DEFAULT_SHARPEN_RADIUS: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ToolError {
    #[error("{op} parameter {value} outside [{min}, {max}]")]
    OutOfRange {
        op: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("op list has {0} entries; at most {MAX_COMPOSE_LEN} allowed")]
    TooManyOps(usize),
    #[error("cannot parse color op {text:?}: {reason}")]
    Syntax { text: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ColorOp {
    /// `v' = v (1 + f)`
    Brightness(f64),
    /// Stretch about the mean luma: `v' = μ + (1 + f)(v − μ)`
    Contrast(f64),
    /// HSV saturation gain.
    Saturation(f64),
    /// Opposed red/blue gains: `R (1 + f)`, `B (1 − f)`.
    WhiteBalance(f64),
    /// Hue rotation in degrees.
    ToneTint(f64),
    /// `v' = v^(1/g)`
    Gamma(f64),
    /// Unsharp mask.
    Sharpen { amount: f64, radius: f64 },
    /// Gaussian smoothing with the given radius (sigma).
    Smooth(f64),
}

fn in_range(op: &'static str, value: f64, (min, max): (f64, f64)) -> Result<(), ToolError> {
    if value.is_finite() && value >= min && value <= max {
        Ok(())
    } else {
        Err(ToolError::OutOfRange {
            op,
            value,
            min,
            max,
        })
    }
}

impl ColorOp {
    pub fn name(&self) -> &'static str {
        match self {
            ColorOp::Brightness(_) => "brightness",
            ColorOp::Contrast(_) => "contrast",
            ColorOp::Saturation(_) => "saturation",
            ColorOp::WhiteBalance(_) => "white_balance",
            ColorOp::ToneTint(_) => "tone_tint",
            ColorOp::Gamma(_) => "gamma",
            ColorOp::Sharpen { .. } => "sharpen",
            ColorOp::Smooth(_) => "smooth",
        }
    }

    pub fn validate(&self) -> Result<(), ToolError> {
        let name = self.name();
        match *self {
            ColorOp::Brightness(f)
            | ColorOp::Contrast(f)
            | ColorOp::Saturation(f)
            | ColorOp::WhiteBalance(f) => in_range(name, f, FRACTION_RANGE),
            ColorOp::ToneTint(h) => in_range(name, h, HUE_RANGE),
            ColorOp::Gamma(g) => in_range(name, g, GAMMA_RANGE),
            ColorOp::Sharpen { amount, radius } => {
                in_range(name, amount, FRACTION_RANGE)?;
                in_range(name, radius, RADIUS_RANGE)
            }
            ColorOp::Smooth(r) => in_range(name, r, RADIUS_RANGE),
        }
    }
}

/// Apply one op to a whole image.
pub fn apply(op: &ColorOp, img: &ImageRgb) -> Result<ImageRgb, ToolError> {
    op.validate()?;
    let out = match *op {
        ColorOp::Brightness(f) => img.map_pixels(|p| p.map(|v| v * (1.0 + f))),
        ColorOp::Contrast(f) => {
            let mu = img.pixels().map(luma_of).sum::<f64>() / img.pixel_count() as f64;
            img.map_pixels(|p| p.map(|v| mu + (1.0 + f) * (v - mu)))
        }
        ColorOp::Saturation(f) => img.map_pixels(|p| {
            let [h, s, v] = rgb_to_hsv(p);
            hsv_to_rgb([h, imagecore::clamp01(s * (1.0 + f)), v])
        }),
        ColorOp::WhiteBalance(f) => img.map_pixels(|[r, g, b]| [r * (1.0 + f), g, b * (1.0 - f)]),
        ColorOp::ToneTint(deg) => img.map_pixels(|p| {
            let [h, s, v] = rgb_to_hsv(p);
            hsv_to_rgb([h + deg, s, v])
        }),
        ColorOp::Gamma(g) => img.map_pixels(|p| p.map(|v| v.powf(1.0 / g))),
        ColorOp::Sharpen { amount, radius } => per_channel(img, |plane| {
            let blurred = gaussian_blur(plane, radius);
            plane
                .data()
                .iter()
                .zip(blurred.data())
                .map(|(&v, &b)| v + amount * (v - b))
                .collect()
        }),
        ColorOp::Smooth(radius) => {
            per_channel(img, |plane| gaussian_blur(plane, radius).into_vec())
        }
    };
    Ok(out)
}

fn per_channel(img: &ImageRgb, f: impl Fn(&ImageGray) -> Vec<f64>) -> ImageRgb {
    let (w, h) = img.dims();
    let planes: Vec<ImageGray> = (0..3)
        .map(|c| ImageGray::from_vec_clamped(w, h, f(&img.channel(c))).expect("same dims"))
        .collect();
    ImageRgb::from_channels(&planes[0], &planes[1], &planes[2]).expect("same dims")
}

/// Apply ops left to right. The empty list is the identity.
pub fn compose(ops: &[ColorOp], img: &ImageRgb) -> Result<ImageRgb, ToolError> {
    if ops.len() > MAX_COMPOSE_LEN {
        return Err(ToolError::TooManyOps(ops.len()));
    }
    ops.iter().try_fold(img.clone(), |acc, op| apply(op, &acc))
}

/// Shortest exact rendering: two decimals when that round-trips, otherwise
/// the full shortest representation.
fn fmt_value(v: f64, signed: bool) -> String {
    let two = if signed {
        format!("{v:+.2}")
    } else {
        format!("{v:.2}")
    };
    if two.parse::<f64>().ok() == Some(v) {
        two
    } else if signed {
        format!("{v:+}")
    } else {
        format!("{v}")
    }
}

impl fmt::Display for ColorOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.name();
        match *self {
            ColorOp::Brightness(v)
            | ColorOp::Contrast(v)
            | ColorOp::Saturation(v)
            | ColorOp::WhiteBalance(v)
            | ColorOp::ToneTint(v) => write!(f, "{name}:{}", fmt_value(v, true)),
            ColorOp::Gamma(g) => write!(f, "{name}:{}", fmt_value(g, false)),
            ColorOp::Smooth(r) => write!(f, "{name}:{}", fmt_value(r, false)),
            ColorOp::Sharpen { amount, radius } => write!(
                f,
                "{name}:{},{}",
                fmt_value(amount, true),
                fmt_value(radius, false)
            ),
        }
    }
}

impl FromStr for ColorOp {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = |reason: &str| ToolError::Syntax {
            text: s.to_string(),
            reason: reason.to_string(),
        };
        let (name, args) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| syntax("missing ':'"))?;
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| syntax("bad number"))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(syntax("non-finite number"))
                    }
                })
        };
        let op = match name.trim() {
            "brightness" => ColorOp::Brightness(num(args)?),
            "contrast" => ColorOp::Contrast(num(args)?),
            "saturation" => ColorOp::Saturation(num(args)?),
            "white_balance" => ColorOp::WhiteBalance(num(args)?),
            "tone_tint" => ColorOp::ToneTint(num(args)?),
            "gamma" => ColorOp::Gamma(num(args)?),
            "smooth" => ColorOp::Smooth(num(args)?),
            "sharpen" => {
                let (a, r) = args
                    .split_once(',')
                    .map(|(a, r)| (a, Some(r)))
                    .unwrap_or((args, None));
                ColorOp::Sharpen {
                    amount: num(a)?,
                    radius: r.map(num).transpose()?.unwrap_or(DEFAULT_SHARPEN_RADIUS),
                }
            }
            other => return Err(syntax(&format!("unknown op {other:?}"))),
        };
        op.validate()?;
        Ok(op)
    }
}

/// Ordered op list with the `a|b|c` text form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recipe(pub Vec<ColorOp>);

impl Recipe {
    pub fn ops(&self) -> &[ColorOp] {
        &self.0
    }

    pub fn apply(&self, img: &ImageRgb) -> Result<ImageRgb, ToolError> {
        compose(&self.0, img)
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{op}")?;
        }
        Ok(())
    }
}

impl FromStr for Recipe {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Ok(Recipe::default());
        }
        s.split('|')
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(Recipe)
    }
}

impl serde::Serialize for Recipe {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Recipe {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl serde::Serialize for ColorOp {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for ColorOp {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
