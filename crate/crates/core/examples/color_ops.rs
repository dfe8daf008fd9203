//! Apply individual color ops and a recipe parsed from its text form.
//!
//! cargo run --example color_ops

use lumapolish::imagecore::ImageRgb;
use lumapolish::reward::extract_features;
use lumapolish::toolset::{self, ColorOp, Recipe};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = ImageRgb::from_fn(32, 32, |x, y| {
        [0.2 + 0.01 * x as f64, 0.25, 0.15 + 0.01 * y as f64]
    })?;
    let ops = [
        ColorOp::Brightness(0.2),
        ColorOp::Contrast(0.3),
        ColorOp::Saturation(0.5),
        ColorOp::WhiteBalance(0.1),
        ColorOp::ToneTint(15.0),
        ColorOp::Gamma(0.8),
        ColorOp::Sharpen {
            amount: 1.0,
            radius: 1.0,
        },
        ColorOp::Smooth(1.5),
    ];
    let base = extract_features(&img);
    println!("{:<24} {:>8} {:>8} {:>8}", "op", "luma", "sat", "contrast");
    println!(
        "{:<24} {:>8.4} {:>8.4} {:>8.4}",
        "(input)", base.mean_luma, base.mean_saturation, base.rms_contrast
    );
    for op in ops {
        let f = extract_features(&toolset::apply(&op, &img)?);
        println!(
            "{:<24} {:>8.4} {:>8.4} {:>8.4}",
            op.to_string(),
            f.mean_luma,
            f.mean_saturation,
            f.rms_contrast
        );
    }

    let recipe: Recipe = "brightness:+0.20|saturation:+0.25|gamma:0.90".parse()?;
    let out = recipe.apply(&img)?;
    println!(
        "recipe {recipe}: mean luma {:.4} -> {:.4}",
        img.mean_luma(),
        out.mean_luma()
    );
    Ok(())
}
