//! Brighten one region of a dark image from a prompt and a mask, leaving the
//! rest untouched, then print the enhancement summary.
//!
//! cargo run --example relight_region

use lumapolish::imagecore::{self, ImageGray, ImageRgb};
use lumapolish::relight::{self, EnhanceConfig, MaskOrigin};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::temp_dir().join("lumapolish-examples");
    std::fs::create_dir_all(&out)?;
    let img = ImageRgb::from_fn(80, 60, |x, y| {
        let v = 0.05 + 0.2 * ((x as f64 / 9.0).sin() * (y as f64 / 7.0).cos()).abs();
        [v, v * 0.95, v * 1.05]
    })?;
    let mask = ImageGray::from_fn(80, 60, |x, y| {
        let (dx, dy) = (x as f64 - 25.0, y as f64 - 30.0);
        if dx * dx + dy * dy < 15.0 * 15.0 {
            1.0
        } else {
            0.0
        }
    })?;
    let mask_path = out.join("lamp_mask.png");
    imagecore::save_gray(&mask, &mask_path)?;

    let cfg = EnhanceConfig::default();
    for prompt in [
        "brighten the lamp a little",
        "brighten the lamp dramatically and increase saturation slightly",
        "darken the lamp a little",
    ] {
        let result = relight::enhance(&img, prompt, MaskOrigin::File(&mask_path), &cfg)?;
        let untouched = (0..60)
            .flat_map(|y| (0..80).map(move |x| (x, y)))
            .filter(|&(x, _)| x > 55)
            .all(|(x, y)| result.image.get(x, y) == img.get(x, y));
        println!("{prompt}");
        println!("  {}", serde_json::to_string(&result.summary)?);
        println!("  far pixels unchanged: {untouched}");
    }

    // Without a mask file, a named region can fall back to the darkest pixels.
    let result = relight::enhance(
        &img,
        "brighten the shadows",
        MaskOrigin::Heuristic(0.3),
        &cfg,
    )?;
    println!(
        "heuristic mask covers {:.0}% of the image",
        100.0 * result.mask.coverage()
    );
    imagecore::save_image(&result.image, out.join("relit.png"))?;
    Ok(())
}
