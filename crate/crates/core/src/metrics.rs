//! Full-reference image quality metrics and annotation score aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{ensure_same_dims, ImageError, ImageGray, ImageRgb};

/// Returned by [`psnr`] for identical images, and the upper bound otherwise.
pub const PSNR_CAP: f64 = 99.0;
/// Side of the square SSIM window.
pub const SSIM_WINDOW: usize = 8;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// Tolerance on the weight sum for weighted totals.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("ssim needs both sides >= {SSIM_WINDOW}, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("dimension score {name} = {value} outside [1, 5]")]
    ScoreRange { name: &'static str, value: f64 },
    #[error("weights must be non-negative and sum to 1, got sum {sum}")]
    BadWeights { sum: f64 },
}

fn mse(a: &ImageRgb, b: &ImageRgb) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB with peak 1.0, capped at [`PSNR_CAP`].
pub fn psnr(a: &ImageRgb, b: &ImageRgb) -> Result<f64, MetricsError> {
    let e = mse(a, b)?;
    if e == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / e).log10()).min(PSNR_CAP))
}

/// Sums over every `k`-wide run along rows, then every `k`-tall run along
/// columns. Output is `(w - k + 1) x (h - k + 1)`.
fn window_sums(data: &[f64], w: usize, h: usize, k: usize) -> Vec<f64> {
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let row = &data[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = row[x..x + k].iter().sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|d| rows[(y + d) * ow + x]).sum();
        }
    }
    out
}

fn ssim_gray(a: &ImageGray, b: &ImageGray) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            width: w,
            height: h,
        });
    }
    let k = SSIM_WINDOW;
    let n = (k * k) as f64;
    let (x, y) = (a.data(), b.data());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
    let sx = window_sums(x, w, h, k);
    let sy = window_sums(y, w, h, k);
    let sxx = window_sums(&xx, w, h, k);
    let syy = window_sums(&yy, w, h, k);
    let sxy = window_sums(&xy, w, h, k);

    let total: f64 = (0..sx.len())
        .map(|i| {
            let mx = sx[i] / n;
            let my = sy[i] / n;
            let vx = sxx[i] / n - mx * mx;
            let vy = syy[i] / n - my * my;
            let cov = sxy[i] / n - mx * my;
            ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2))
        })
        .sum();
    Ok(total / sx.len() as f64)
}

/// Mean SSIM over every 8×8 window (stride 1) of the luma planes.
/// Window statistics use population (1/64) moments.
pub fn ssim(a: &ImageRgb, b: &ImageRgb) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    ssim_gray(&a.to_luma(), &b.to_luma())
}

fn pixel_angle(p: [f64; 3], q: [f64; 3]) -> f64 {
    let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let nq = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2]).sqrt();
    if np == 0.0 || nq == 0.0 {
        return 0.0;
    }
    // atan2 of |p × q| and p · q stays accurate for nearly parallel vectors
    // and is exactly 0 for identical ones.
    let cross = [
        p[1] * q[2] - p[2] * q[1],
        p[2] * q[0] - p[0] * q[2],
        p[0] * q[1] - p[1] * q[0],
    ];
    let sin = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
    let dot = p[0] * q[0] + p[1] * q[1] + p[2] * q[2];
    sin.atan2(dot)
}

/// Sum over pixels of the angle in radians between RGB vectors. Pixels where
/// either vector is zero contribute nothing.
pub fn angular_color_loss(a: &ImageRgb, b: &ImageRgb) -> Result<f64, MetricsError> {
    ensure_same_dims(a.dims(), b.dims())?;
    Ok(a.pixels()
        .zip(b.pixels())
        .map(|(p, q)| pixel_angle(p, q))
        .sum())
}

/// [`angular_color_loss`] divided by the pixel count.
pub fn angular_color_loss_mean(a: &ImageRgb, b: &ImageRgb) -> Result<f64, MetricsError> {
    Ok(angular_color_loss(a, b)? / a.pixel_count() as f64)
}

/// The three full-reference metrics reported by `eval`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub angular_color: f64,
}

/// PSNR, SSIM and summed angular loss of `test` against `reference`.
pub fn evaluate(reference: &ImageRgb, test: &ImageRgb) -> Result<MetricsReport, MetricsError> {
    Ok(MetricsReport {
        psnr: psnr(reference, test)?,
        ssim: ssim(reference, test)?,
        angular_color: angular_color_loss(reference, test)?,
    })
}

/// Five annotation dimensions, each in `[1, 5]`, with optional weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionScores {
    pub color_quality: f64,
    pub clarity_detail: f64,
    pub naturalness_realism: f64,
    pub aesthetic_appeal: f64,
    pub overall_rating: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<[f64; 5]>,
}

impl DimensionScores {
    pub const NAMES: [&'static str; 5] = [
        "color_quality",
        "clarity_detail",
        "naturalness_realism",
        "aesthetic_appeal",
        "overall_rating",
    ];

    pub fn new(scores: [f64; 5]) -> Self {
        let [color_quality, clarity_detail, naturalness_realism, aesthetic_appeal, overall_rating] =
            scores;
        Self {
            color_quality,
            clarity_detail,
            naturalness_realism,
            aesthetic_appeal,
            overall_rating,
            weights: None,
        }
    }

    pub fn with_weights(mut self, weights: [f64; 5]) -> Self {
        self.weights = Some(weights);
        self
    }

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.color_quality,
            self.clarity_detail,
            self.naturalness_realism,
            self.aesthetic_appeal,
            self.overall_rating,
        ]
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (name, value) in Self::NAMES.iter().zip(self.as_array()) {
            if !(1.0..=5.0).contains(&value) {
                return Err(MetricsError::ScoreRange { name, value });
            }
        }
        if let Some(w) = self.weights {
            let sum: f64 = w.iter().sum();
            if w.iter().any(|v| v.is_nan() || *v < 0.0) || (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(MetricsError::BadWeights { sum });
            }
        }
        Ok(())
    }
}

/// Unweighted: sum of the five scores over 25, in `[0.2, 1]`.
/// Weighted: `Σ w_k s_k`, in `[1, 5]`.
pub fn total_score(scores: &DimensionScores) -> Result<f64, MetricsError> {
    scores.validate()?;
    let s = scores.as_array();
    Ok(match scores.weights {
        None => s.iter().sum::<f64>() / 25.0,
        Some(w) => w.iter().zip(s).map(|(w, s)| w * s).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageRgb {
        ImageRgb::from_fn(w, h, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let a = ImageRgb::filled(4, 4, [0.5; 3]).unwrap();
        let b = ImageRgb::filled(4, 4, [0.6; 3]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 7, 5);
        let b = random_image(&mut rng, 7, 5);
        let mut sum = 0.0;
        for y in 0..5 {
            for x in 0..7 {
                for c in 0..3 {
                    let d = a.get(x, y)[c] - b.get(x, y)[c];
                    sum += d * d;
                }
            }
        }
        let oracle = 10.0 * (1.0 / (sum / 105.0)).log10();
        assert!((psnr(&a, &b).unwrap() - oracle).abs() < 1e-9);
    }

    fn ssim_oracle(a: &ImageGray, b: &ImageGray) -> f64 {
        let (w, h) = a.dims();
        let mut acc = 0.0;
        let mut count = 0.0;
        for oy in 0..=h - 8 {
            for ox in 0..=w - 8 {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for y in oy..oy + 8 {
                    for x in ox..ox + 8 {
                        xs.push(a.get(x, y));
                        ys.push(b.get(x, y));
                    }
                }
                let mx = xs.iter().sum::<f64>() / 64.0;
                let my = ys.iter().sum::<f64>() / 64.0;
                let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / 64.0;
                let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / 64.0;
                let cov = xs
                    .iter()
                    .zip(&ys)
                    .map(|(p, q)| (p - mx) * (q - my))
                    .sum::<f64>()
                    / 64.0;
                acc += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1.0;
            }
        }
        acc / count
    }

    #[test]
    fn ssim_identity_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_image(&mut rng, 16, 16);
        let b = a.map_pixels(|p| p.map(|v| (v * 0.8 + 0.05).min(1.0)));
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let got = ssim(&a, &b).unwrap();
        let want = ssim_oracle(&a.to_luma(), &b.to_luma());
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn ssim_of_negative_is_negative() {
        let a = ImageRgb::from_fn(16, 16, |x, y| [((x + y) % 2) as f64; 3]).unwrap();
        let inv = a.map_pixels(|p| p.map(|v| 1.0 - v));
        assert!(ssim(&a, &inv).unwrap() < 0.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = ImageRgb::filled(7, 9, [0.5; 3]).unwrap();
        assert!(matches!(ssim(&a, &a), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn angular_loss_cases() {
        let r = ImageRgb::filled(1, 1, [1.0, 0.0, 0.0]).unwrap();
        let g = ImageRgb::filled(1, 1, [0.0, 1.0, 0.0]).unwrap();
        let k = ImageRgb::filled(1, 1, [0.0; 3]).unwrap();
        assert!((angular_color_loss(&r, &g).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(angular_color_loss(&r, &k).unwrap(), 0.0);
        assert_eq!(angular_color_loss(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn angular_loss_matches_arccos_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let a = random_image(&mut rng, 9, 6);
        let b = random_image(&mut rng, 9, 6);
        let oracle: f64 = a
            .pixels()
            .zip(b.pixels())
            .map(|(p, q)| {
                let dot: f64 = (0..3).map(|c| p[c] * q[c]).sum();
                let np = p.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
                (dot / (np * nq)).clamp(-1.0, 1.0).acos()
            })
            .sum();
        assert!((angular_color_loss(&a, &b).unwrap() - oracle).abs() < 1e-9);
        assert_eq!(angular_color_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn total_score_examples() {
        let fives = DimensionScores::new([5.0; 5]);
        assert_eq!(total_score(&fives).unwrap(), 1.0);
        assert_eq!(total_score(&DimensionScores::new([1.0; 5])).unwrap(), 0.2);
        let s = DimensionScores::new([5.0, 4.0, 3.0, 2.0, 1.0]);
        assert!((total_score(&s).unwrap() - 0.6).abs() < 1e-12);
        let weighted = s.with_weights([0.2; 5]);
        assert!((total_score(&weighted).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn bad_scores_and_weights() {
        assert!(matches!(
            total_score(&DimensionScores::new([0.5, 3.0, 3.0, 3.0, 3.0])),
            Err(MetricsError::ScoreRange { .. })
        ));
        let s = DimensionScores::new([3.0; 5]).with_weights([0.3, 0.2, 0.2, 0.2, 0.2]);
        assert!(matches!(
            total_score(&s),
            Err(MetricsError::BadWeights { .. })
        ));
    }
}
