//! DDIM sampling of 1-D Gaussian data with the closed-form denoiser.
//!
//! cargo run --release --example ddim_gaussian [-- <trajectories>]

use lumapolish::diffusiontoy::{self, GaussianOracleDenoiser};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n: usize = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(100_000);
    let sched = diffusiontoy::linear_schedule(50, 1e-4, 0.02)?;
    println!("T = 50, alpha_bar_T = {:.4}", sched.alpha_cum(50));
    let oracle = GaussianOracleDenoiser::new(0.0, 1.0, &sched);
    for eta in [0.0, 0.5, 1.0] {
        let ys = diffusiontoy::sample_gaussian(&oracle, &sched, eta, n, 7)?;
        let (m, v) = diffusiontoy::moments(&ys);
        println!("eta {eta}: {n} trajectories, mean {m:+.4}, variance {v:.4}");
    }

    let x0 = vec![0.3, -1.2, 2.0];
    let eps = vec![0.5, 0.1, -0.7];
    for t in [1, 10, 50] {
        let y = diffusiontoy::forward_noise(&x0, t, &eps, &sched)?;
        let back = diffusiontoy::predict_x0(&y, t, &eps, &sched)?;
        let err = back
            .iter()
            .zip(&x0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("t = {t:>2}: x0 recovered from y_t with the true noise, error {err:.1e}");
    }
    Ok(())
}
