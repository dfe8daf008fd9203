//! PSNR, SSIM, angular color error and the five-dimension annotation score.
//!
//! cargo run --example metrics_eval [-- <reference> <test>]

use lumapolish::imagecore::{self, ImageRgb};
use lumapolish::metrics::{self, DimensionScores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (reference, test) = if let [a, b] = args.as_slice() {
        (imagecore::load_image(a)?, imagecore::load_image(b)?)
    } else {
        let r = ImageRgb::from_fn(48, 48, |x, y| {
            [
                0.3 + 0.01 * (x % 20) as f64,
                0.4,
                0.2 + 0.01 * (y % 30) as f64,
            ]
        })?;
        let t = r.map_pixels(|p| [p[0] * 1.05, p[1] * 0.97, p[2]]);
        (r, t)
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics::evaluate(&reference, &test)?)?
    );
    println!(
        "angular error per pixel {:.4} rad (the report sums it over pixels)",
        metrics::angular_color_loss_mean(&reference, &test)?
    );

    let half = ImageRgb::filled(8, 8, [0.5; 3])?;
    let six = ImageRgb::filled(8, 8, [0.6; 3])?;
    println!("psnr(0.5 vs 0.6) = {} dB", metrics::psnr(&half, &six)?);

    let scores = DimensionScores::new([4.0, 3.0, 5.0, 2.0, 4.0]);
    println!(
        "unweighted total {:.3} (sum / 25)",
        metrics::total_score(&scores)?
    );
    let weighted = scores.with_weights([0.3, 0.2, 0.2, 0.1, 0.2]);
    println!(
        "weighted total   {:.3} (on the 1-5 scale)",
        metrics::total_score(&weighted)?
    );
    Ok(())
}
