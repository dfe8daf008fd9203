use rayon::prelude::*;

use super::{ImageGray, ImageRgb};

/// Normalized 1-D Gaussian taps truncated at `ceil(3 * sigma)`.
///
/// Returns `[1.0]` for `sigma <= 0`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let denom = 2.0 * sigma * sigma;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / denom).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable Gaussian blur of a raw plane with edge-clamp padding.
///
/// Rows are processed in parallel; every output value is computed by the
/// same sequence of operations regardless of how rows are scheduled.
pub(crate) fn blur_plane(data: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    debug_assert_eq!(data.len(), width * height);
    let taps = gaussian_kernel(sigma);
    if taps.len() == 1 {
        return data.to_vec();
    }
    let radius = (taps.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut horizontal = vec![0.0; data.len()];
    horizontal
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, out_row)| {
            let row = &data[y * width..(y + 1) * width];
            for (x, out) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &w) in taps.iter().enumerate() {
                    acc += w * row[clamp(x as isize + k as isize - radius, width)];
                }
                *out = acc;
            }
        });

    let mut out = vec![0.0; data.len()];
    out.par_chunks_mut(width)
        .enumerate()
        .for_each(|(y, out_row)| {
            for (x, o) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &w) in taps.iter().enumerate() {
                    let yy = clamp(y as isize + k as isize - radius, height);
                    acc += w * horizontal[yy * width + x];
                }
                *o = acc;
            }
        });
    out
}

/// Gaussian blur of a gray image; `sigma <= 0` returns the input unchanged.
pub fn gaussian_blur(img: &ImageGray, sigma: f64) -> ImageGray {
    let data = blur_plane(img.data(), img.width(), img.height(), sigma);
    ImageGray::from_vec_clamped(img.width(), img.height(), data).expect("blur preserves dimensions")
}

/// Per-channel Gaussian blur of an RGB image.
pub fn gaussian_blur_rgb(img: &ImageRgb, sigma: f64) -> ImageRgb {
    let planes: Vec<ImageGray> = (0..3)
        .map(|c| gaussian_blur(&img.channel(c), sigma))
        .collect();
    ImageRgb::from_channels(&planes[0], &planes[1], &planes[2]).expect("same dims")
}
