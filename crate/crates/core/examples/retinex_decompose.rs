//! Split a synthetic night scene into illumination and reflectance, then
//! check that recombining them gives the scene back.
//!
//! cargo run --example retinex_decompose [-- <image.png>]

use lumapolish::imagecore::{self, ImageRgb};
use lumapolish::retinex;

fn night_scene() -> ImageRgb {
    // A dim street with a lamp glow in the upper left.
    ImageRgb::from_fn(96, 64, |x, y| {
        let (dx, dy) = (x as f64 - 20.0, y as f64 - 14.0);
        let glow = 0.5 * (-(dx * dx + dy * dy) / 300.0).exp();
        let stripe = if (x / 8) % 2 == 0 { 0.06 } else { 0.1 };
        let v = 0.04 + stripe + glow;
        [v * 1.1, v, v * 0.8]
    })
    .unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = match std::env::args().nth(1) {
        Some(path) => imagecore::load_image(path)?,
        None => night_scene(),
    };
    let out = std::env::temp_dir().join("lumapolish-examples");
    std::fs::create_dir_all(&out)?;

    for sigma in [2.0, 8.0, 15.0] {
        let pair = retinex::decompose(&img, sigma)?;
        let back = retinex::reconstruct(&pair);
        let unclamped = pair.unclamped_mask(&img);
        let err = back
            .data()
            .chunks(3)
            .zip(img.data().chunks(3))
            .zip(&unclamped)
            .filter(|(_, ok)| **ok)
            .flat_map(|((a, b), _)| a.iter().zip(b).map(|(p, q)| (p - q).abs()))
            .fold(0.0, f64::max);
        let l = pair.illumination();
        println!(
            "sigma {sigma:>4}: illumination [{:.3}, {:.3}] mean {:.3}, round-trip error {err:.1e}",
            l.min(),
            l.max(),
            l.mean()
        );
        imagecore::save_gray(l, out.join(format!("illum_s{sigma}.png")))?;
        imagecore::save_image(
            &pair.reflection().to_image_clamped(),
            out.join(format!("refl_s{sigma}.png")),
        )?;
    }
    println!("wrote maps to {}", out.display());
    Ok(())
}
