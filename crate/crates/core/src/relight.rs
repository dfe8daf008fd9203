//! Region resolution, illumination/reflectance fusion and the end-to-end
//! `enhance` pipeline.

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::brightctl::{self, AdjustmentMap, BrightError};
use crate::imagecore::{self, ensure_same_dims, gaussian_blur, ImageError, ImageGray, ImageRgb};
use crate::metrics;
use crate::promptparse::{self, AdjustmentPlan, PromptError, TargetSpec};
use crate::retinex::{self, RetinexError, RetinexPair};
use crate::toolset::{self, ToolError};

/// Dark-pixel quantile used by the threshold heuristic.
pub const DEFAULT_HEURISTIC_QUANTILE: f64 = 0.3;
pub const DEFAULT_FEATHER_SIGMA: f64 = 3.0;
pub const DEFAULT_RETINEX_SIGMA: f64 = 15.0;
pub const DEFAULT_SPATIAL_SIGMA: f64 = 4.0;

#[derive(Debug, Error)]
pub enum RelightError {
    #[error("region {0:?} has no mask; pass a mask file or enable the threshold heuristic")]
    UnresolvedTarget(String),
    #[error("mask selects no pixels")]
    EmptyRegion,
    #[error("quantile must be in (0, 1], got {0}")]
    InvalidQuantile(f64),
    #[error("{name} must be finite and >= 0, got {value}")]
    InvalidSigma { name: &'static str, value: f64 },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Retinex(#[from] RetinexError),
    #[error(transparent)]
    Bright(#[from] BrightError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskSource {
    File,
    ThresholdHeuristic,
    WholeImage,
}

/// Enhancement mask in `[0, 1]`; 1 means "edit here".
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    mask: ImageGray,
    source: MaskSource,
}

impl RegionMask {
    pub fn new(mask: ImageGray, source: MaskSource) -> Result<Self, RelightError> {
        if mask.max() <= 0.0 {
            return Err(RelightError::EmptyRegion);
        }
        Ok(Self { mask, source })
    }

    pub fn whole(width: usize, height: usize) -> Result<Self, RelightError> {
        Self::new(
            ImageGray::filled(width, height, 1.0)?,
            MaskSource::WholeImage,
        )
    }

    pub fn mask(&self) -> &ImageGray {
        &self.mask
    }

    pub fn source(&self) -> MaskSource {
        self.source
    }

    pub fn dims(&self) -> (usize, usize) {
        self.mask.dims()
    }

    /// Fraction of the image covered, counting partial membership.
    pub fn coverage(&self) -> f64 {
        self.mask.mean()
    }
}

/// Linear-interpolation quantile of `values` (the "type 7" definition).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mask of pixels whose luma is strictly below the `q` quantile of luma.
pub fn threshold_mask(img: &ImageRgb, q: f64) -> Result<RegionMask, RelightError> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(RelightError::InvalidQuantile(q));
    }
    let luma = img.to_luma();
    let cut = quantile(luma.data(), q);
    let mask = luma.map(|v| if v < cut { 1.0 } else { 0.0 });
    RegionMask::new(mask, MaskSource::ThresholdHeuristic)
}

/// Where a named region's mask comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskOrigin<'a> {
    None,
    File(&'a Path),
    Heuristic(f64),
}

/// Turn a prompt target into a mask. A mask file, when given, wins over the
/// heuristic and also applies to whole-image prompts.
pub fn resolve_target(
    spec: &TargetSpec,
    img: &ImageRgb,
    origin: MaskOrigin<'_>,
) -> Result<RegionMask, RelightError> {
    let (w, h) = img.dims();
    match (spec, origin) {
        (_, MaskOrigin::File(path)) => {
            let mask = imagecore::load_gray(path)?;
            ensure_same_dims(mask.dims(), img.dims())?;
            RegionMask::new(mask, MaskSource::File)
        }
        (TargetSpec::WholeImage, _) => RegionMask::whole(w, h),
        (TargetSpec::NamedRegion(_), MaskOrigin::Heuristic(q)) => threshold_mask(img, q),
        (TargetSpec::NamedRegion(name), MaskOrigin::None) => {
            Err(RelightError::UnresolvedTarget(name.clone()))
        }
    }
}

fn feather(mask: &RegionMask, sigma: f64) -> Result<ImageGray, RelightError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(RelightError::InvalidSigma {
            name: "feather sigma",
            value: sigma,
        });
    }
    Ok(gaussian_blur(mask.mask(), sigma))
}

fn blend(
    alpha: &ImageGray,
    inside: &ImageRgb,
    outside: &ImageRgb,
) -> Result<ImageRgb, RelightError> {
    ensure_same_dims(alpha.dims(), inside.dims())?;
    ensure_same_dims(alpha.dims(), outside.dims())?;
    let data = inside
        .pixels()
        .zip(outside.pixels())
        .zip(alpha.data())
        .flat_map(|((p, o), &a)| [0, 1, 2].map(|c| a * p[c] + (1.0 - a) * o[c]))
        .collect();
    Ok(ImageRgb::from_vec_clamped(
        inside.width(),
        inside.height(),
        data,
    )?)
}

/// `α·clamp(R × L′) + (1 − α)·original` with `α = blur(mask, feather_sigma)`.
pub fn fuse(
    illum_adj: &ImageGray,
    pair: &RetinexPair,
    mask: &RegionMask,
    original: &ImageRgb,
    feather_sigma: f64,
) -> Result<ImageRgb, RelightError> {
    ensure_same_dims(illum_adj.dims(), pair.dims())?;
    ensure_same_dims(mask.dims(), original.dims())?;
    ensure_same_dims(pair.dims(), original.dims())?;
    let alpha = feather(mask, feather_sigma)?;
    let relit = retinex::recombine(illum_adj, pair.reflection())?;
    blend(&alpha, &relit, original)
}

/// Knobs of the enhance pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceConfig {
    pub retinex_sigma: f64,
    pub spatial_sigma: f64,
    pub feather_sigma: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            retinex_sigma: DEFAULT_RETINEX_SIGMA,
            spatial_sigma: DEFAULT_SPATIAL_SIGMA,
            feather_sigma: DEFAULT_FEATHER_SIGMA,
        }
    }
}

/// Before/after statistics printed by `enhance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhanceSummary {
    pub mean_luma_before: f64,
    pub mean_luma_after: f64,
    pub psnr_vs_input: f64,
    /// Absent when either side is under 8 pixels.
    pub ssim_vs_input: Option<f64>,
    pub angular_color_vs_input: f64,
    pub mask_source: MaskSource,
    pub mask_coverage: f64,
    pub plan: String,
}

#[derive(Debug, Clone)]
pub struct Enhanced {
    pub image: ImageRgb,
    pub plan: AdjustmentPlan,
    pub mask: RegionMask,
    /// `None` when the plan leaves brightness alone.
    pub adjustment: Option<AdjustmentMap>,
    pub summary: EnhanceSummary,
}

/// Run a compiled plan on `img`.
pub fn enhance_plan(
    img: &ImageRgb,
    plan: &AdjustmentPlan,
    origin: MaskOrigin<'_>,
    cfg: &EnhanceConfig,
) -> Result<Enhanced, RelightError> {
    let mask = resolve_target(&plan.target, img, origin)?;
    let alpha = feather(&mask, cfg.feather_sigma)?;

    let (fused, adjustment) = if plan.brightness_ratio == 0.0 {
        (img.clone(), None)
    } else {
        let pair = retinex::decompose(img, cfg.retinex_sigma)?;
        let m_init = brightctl::initial_map(pair.illumination());
        let strength = brightctl::control_strength(plan.brightness_ratio);
        let adj = brightctl::spatial_blend(&m_init, strength, mask.mask(), cfg.spatial_sigma)?;
        let illum_adj = brightctl::apply_to_illumination(pair.illumination(), &adj)?;
        let relit = retinex::recombine(&illum_adj, pair.reflection())?;
        (blend(&alpha, &relit, img)?, Some(adj))
    };

    let image = if plan.color_ops.is_empty() {
        fused
    } else {
        let graded = toolset::compose(&plan.color_ops, &fused)?;
        blend(&alpha, &graded, &fused)?
    };

    let summary = EnhanceSummary {
        mean_luma_before: img.mean_luma(),
        mean_luma_after: image.mean_luma(),
        psnr_vs_input: metrics::psnr(img, &image).expect("same dims"),
        ssim_vs_input: metrics::ssim(img, &image).ok(),
        angular_color_vs_input: metrics::angular_color_loss(img, &image).expect("same dims"),
        mask_source: mask.source(),
        mask_coverage: mask.coverage(),
        plan: promptparse::explain(plan),
    };
    Ok(Enhanced {
        image,
        plan: plan.clone(),
        mask,
        adjustment,
        summary,
    })
}

/// Parse `prompt` and run it on `img`.
pub fn enhance(
    img: &ImageRgb,
    prompt: &str,
    origin: MaskOrigin<'_>,
    cfg: &EnhanceConfig,
) -> Result<Enhanced, RelightError> {
    let plan = promptparse::parse(prompt)?;
    enhance_plan(img, &plan, origin, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> ImageRgb {
        ImageRgb::from_fn(w, h, |x, y| {
            let t = (x + y) as f64 / (w + h) as f64;
            [0.05 + 0.3 * t, 0.08 + 0.25 * t, 0.04 + 0.2 * t]
        })
        .unwrap()
    }

    #[test]
    fn heuristic_selects_dark_quarter() {
        let img = ImageRgb::from_fn(20, 5, |x, _| if x < 5 { [0.1; 3] } else { [0.9; 3] }).unwrap();
        let m = threshold_mask(&img, 0.3).unwrap();
        for (p, &v) in img.pixels().zip(m.mask().data()) {
            assert_eq!(v, if p[0] < 0.5 { 1.0 } else { 0.0 });
        }
        assert_eq!(m.coverage(), 0.25);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[4.0, 1.0, 3.0, 2.0], 0.5), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 1.0), 3.0);
    }

    #[test]
    fn unresolved_and_empty_targets() {
        let img = ImageRgb::filled(4, 4, [0.3; 3]).unwrap();
        let named = TargetSpec::NamedRegion("lamp".into());
        assert!(matches!(
            resolve_target(&named, &img, MaskOrigin::None),
            Err(RelightError::UnresolvedTarget(_))
        ));
        assert!(matches!(
            resolve_target(&named, &img, MaskOrigin::Heuristic(0.3)),
            Err(RelightError::EmptyRegion)
        ));
        let whole = resolve_target(&TargetSpec::WholeImage, &img, MaskOrigin::None).unwrap();
        assert_eq!(whole.source(), MaskSource::WholeImage);
        assert_eq!(whole.coverage(), 1.0);
    }

    #[test]
    fn fuse_identity_and_locality() {
        let img = gradient(12, 10);
        let pair = retinex::decompose(&img, 2.0).unwrap();
        let ones = RegionMask::whole(12, 10).unwrap();
        let same = fuse(pair.illumination(), &pair, &ones, &img, 3.0).unwrap();
        for (a, b) in same.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 2e-5);
        }
        let zeros = RegionMask {
            mask: ImageGray::filled(12, 10, 0.0).unwrap(),
            source: MaskSource::File,
        };
        let bright = pair.illumination().map(|v| v * 1.5);
        assert_eq!(fuse(&bright, &pair, &zeros, &img, 3.0).unwrap(), img);
    }

    #[test]
    fn half_plane_mask_without_feather() {
        let img = gradient(8, 6);
        let pair = retinex::decompose(&img, 2.0).unwrap();
        let mask = RegionMask::new(
            ImageGray::from_fn(8, 6, |x, _| if x < 4 { 1.0 } else { 0.0 }).unwrap(),
            MaskSource::File,
        )
        .unwrap();
        let bright = pair.illumination().map(|v| v * 1.4);
        let out = fuse(&bright, &pair, &mask, &img, 0.0).unwrap();
        let relit = retinex::recombine(&bright, pair.reflection()).unwrap();
        for y in 0..6 {
            for x in 0..8 {
                let want = if x < 4 {
                    relit.get(x, y)
                } else {
                    img.get(x, y)
                };
                assert_eq!(out.get(x, y), want);
            }
        }
    }

    #[test]
    fn enhance_whole_image_brightens() {
        let img = gradient(24, 16);
        let out = enhance(
            &img,
            "brighten the image by 30%",
            MaskOrigin::None,
            &EnhanceConfig::default(),
        )
        .unwrap();
        assert!(out.summary.mean_luma_after > out.summary.mean_luma_before);
        assert_eq!(out.summary.mask_source, MaskSource::WholeImage);
    }

    #[test]
    fn enhance_keeps_far_pixels_untouched() {
        let img = gradient(40, 12);
        let plan =
            promptparse::parse("brighten region 'left' a lot and increase saturation by 20%")
                .unwrap();
        let mask_img = ImageGray::from_fn(40, 12, |x, _| if x < 10 { 1.0 } else { 0.0 }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        imagecore::save_gray(&mask_img, &path).unwrap();
        let out = enhance_plan(
            &img,
            &plan,
            MaskOrigin::File(&path),
            &EnhanceConfig::default(),
        )
        .unwrap();
        for y in 0..12 {
            for x in 20..40 {
                assert_eq!(out.image.get(x, y), img.get(x, y));
            }
            assert!(out.image.get(2, y)[1] > img.get(2, y)[1]);
        }
    }

    #[test]
    fn color_only_plan_skips_relighting() {
        let img = gradient(10, 10);
        let out = enhance(
            &img,
            "increase contrast by 10%",
            MaskOrigin::None,
            &EnhanceConfig::default(),
        )
        .unwrap();
        assert!(out.adjustment.is_none());
        let want = toolset::compose(&out.plan.color_ops, &img).unwrap();
        for (a, b) in out.image.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
