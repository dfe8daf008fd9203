#![allow(dead_code)]

use lumapolish::imagecore::ImageRgb;
use lumapolish::reward::RankingDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth, low-saturation image in [0.1, 0.9]: a few low-frequency waves
/// with a mild per-channel tint.
pub fn smooth_fixture(w: usize, h: usize, seed: u64) -> ImageRgb {
    let mut r = rng(seed);
    let base: f64 = r.random_range(0.3..0.6);
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                r.random_range(0.05..0.12),
                r.random_range(-0.3..0.3),
                r.random_range(-0.3..0.3),
                r.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let tint: [f64; 3] = std::array::from_fn(|_| r.random_range(0.9..1.1));
    ImageRgb::from_fn(w, h, |x, y| {
        let v = waves.iter().fold(base, |acc, &(a, fx, fy, ph)| {
            acc + a * (fx * x as f64 + fy * y as f64 + ph).sin()
        });
        let v = v.clamp(0.1, 0.9);
        tint.map(|t| (v * t).clamp(0.0, 1.0))
    })
    .unwrap()
}

/// Noisy textured image with a random brightness below 0.5 and a mild cast.
pub fn random_dim_image(w: usize, h: usize, r: &mut impl Rng) -> ImageRgb {
    let level: f64 = r.random_range(0.05..0.5);
    let contrast: f64 = r.random_range(0.05..0.4);
    let cast: [f64; 3] = std::array::from_fn(|_| r.random_range(0.85..1.15));
    let data: Vec<f64> = (0..w * h)
        .flat_map(|_| {
            let n: f64 = r.sample(StandardNormal);
            let v = level * (1.0 + contrast * n.clamp(-2.5, 2.5));
            cast.map(|c| (v * c).clamp(0.0, 1.0))
        })
        .collect();
    ImageRgb::from_vec(w, h, data).unwrap()
}

/// Groups of `size` images ranked by closeness of mean luma to 0.55. Each
/// group holds exposure variants of one random dim source, each variant
/// scaled by a random gain in [0.5, 1.1]. With `saturation_jitter`, each
/// variant's saturation is also scaled by a random factor in
/// `1 ± saturation_jitter`, which the preference ignores.
pub fn luma_preference_dataset(
    groups: usize,
    size: usize,
    saturation_jitter: f64,
    seed: u64,
) -> RankingDataset {
    let mut r = rng(seed);
    let mut ds = RankingDataset::default();
    for g in 0..groups {
        let source = random_dim_image(24, 24, &mut r);
        let mut imgs: Vec<(f64, ImageRgb)> = (0..size)
            .map(|_| {
                let gain: f64 = r.random_range(0.5..1.1);
                let sat: f64 = r.random_range(-1.0..1.0) * saturation_jitter;
                let img = source.map_pixels(|p| {
                    let y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
                    p.map(|c| (gain * (y + (1.0 + sat) * (c - y))).clamp(0.0, 1.0))
                });
                (-(img.mean_luma() - 0.55).abs(), img)
            })
            .collect();
        imgs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let keys: Vec<f64> = imgs.iter().map(|(k, _)| *k).collect();
        let images: Vec<ImageRgb> = imgs.into_iter().map(|(_, i)| i).collect();
        ds.push_group(&format!("group {g}"), &images, &keys)
            .unwrap();
    }
    ds
}
