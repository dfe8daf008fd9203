//! Greedy reward-guided polishing of a dim, cool-tinted image.
//!
//! cargo run --example autopolish

use lumapolish::colorloop::{self, LoopConfig};
use lumapolish::imagecore::ImageRgb;
use lumapolish::reward::extract_features;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = ImageRgb::from_fn(40, 30, |x, y| {
        let v = 0.12 + 0.004 * x as f64 + 0.002 * y as f64;
        [v * 0.8, v, v * 1.3]
    })?;

    // A hand-written preference: mid-gray exposure, some color, no cast.
    let scorer = |i: &ImageRgb| {
        let f = extract_features(i);
        let [r, g, b] = i.pixels().fold([0.0; 3], |acc, p| {
            [acc[0] + p[0], acc[1] + p[1], acc[2] + p[2]]
        });
        let cast = (r - b).abs() / (r + g + b);
        -4.0 * (f.mean_luma - 0.5).abs() + 0.5 * f.mean_saturation.min(0.3) - 2.0 * cast
    };

    let result = colorloop::autopolish(&img, &scorer, &LoopConfig::default())?;
    for (i, s) in result.steps.iter().enumerate() {
        println!(
            "round {}: {:<22} {:+.4} -> {:+.4} {}",
            i + 1,
            s.op.to_string(),
            s.reward_before,
            s.reward_after,
            if s.accepted { "accept" } else { "stop" }
        );
    }
    println!(
        "score {:+.4} -> {:+.4}, mean luma {:.3} -> {:.3}",
        result.initial_score,
        result.final_score,
        img.mean_luma(),
        result.image.mean_luma()
    );

    let flags = colorloop::replay_accept_rule(
        &[-2.82, -1.34, -0.93, -1.12, 0.22],
        colorloop::DEFAULT_EPS_ACCEPT,
    );
    println!("accept rule on -2.82, -1.34, -0.93, -1.12, 0.22: {flags:?}");
    Ok(())
}
