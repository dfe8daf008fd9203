//! Build the brightness adjustment map for a gradient scene and show that
//! darker pixels get more of the boost while the mean stays at the request.
//!
//! cargo run --example brightness_map

use lumapolish::brightctl;
use lumapolish::imagecore::ImageGray;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (w, h) = (32, 8);
    let illum = ImageGray::from_fn(w, h, |x, _| 0.1 + 0.8 * x as f64 / (w - 1) as f64)?;
    let ones = ImageGray::filled(w, h, 1.0)?;
    let m_init = brightctl::initial_map(&illum);

    for ratio in [0.1, 0.3, 1.0, -0.3] {
        let adj = brightctl::spatial_blend(&m_init, ratio, &ones, 2.0)?;
        let row: Vec<f64> = (0..w).step_by(6).map(|x| adj.values()[x]).collect();
        let lit = brightctl::apply_to_illumination(&illum, &adj)?;
        println!(
            "ratio {ratio:+.2}: mean boost {:.4}, boost left->right {:.3?}, illumination mean {:.3} -> {:.3}",
            adj.mean(),
            row,
            illum.mean(),
            lit.mean()
        );
    }

    // A plan ratio from the prompt is mapped into the map's convention.
    for plan_ratio in [0.1, -0.1 / 1.1, -0.5] {
        println!(
            "plan ratio {plan_ratio:+.4} -> control strength {:+.4}",
            brightctl::control_strength(plan_ratio)
        );
    }
    Ok(())
}
