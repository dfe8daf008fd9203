//! The zero-initialized control branch and the auxiliary training loss.
//!
//! cargo run --example controlnet_aux_loss

use lumapolish::diffusiontoy::{self, AuxWeights, ControlledDenoiser, TinyNet};
use lumapolish::imagecore::ImageRgb;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = TinyNet::random(8, 16, 0.5, &mut rng);
    let mut model = ControlledDenoiser::new(base, 4);
    let x = [0.1, -0.4, 0.9, 0.0, 0.3, -0.2, 0.5, 0.7];
    let c = [1.0, 0.0, -1.0, 0.5];
    let plain = model.base.forward(&x)?;
    let controlled = diffusiontoy::controlnet_forward(&x, &c, &model)?;
    println!(
        "fresh control branch changes the output by {:e}",
        max_diff(&plain, &controlled)
    );

    model.z1 = diffusiontoy::Affine::random(4, 8, 0.3, &mut rng);
    model.z2 = diffusiontoy::Affine::random(8, 8, 0.3, &mut rng);
    let controlled = diffusiontoy::controlnet_forward(&x, &c, &model)?;
    println!(
        "after perturbing the projections: {:.4}",
        max_diff(&plain, &controlled)
    );

    let target = ImageRgb::from_fn(12, 12, |x, y| {
        [0.3 + 0.02 * x as f64, 0.4, 0.2 + 0.02 * y as f64]
    })?;
    let pred = target.map_pixels(|p| [p[0] * 0.9, p[1], p[2] * 1.1]);
    let weights = AuxWeights {
        col: 1.0,
        ssim: 1.0,
        reward: 0.0,
    };
    let loss = diffusiontoy::aux_loss(&pred, &target, &weights, 0.25, None)?;
    println!("aux loss {:?}", loss);
    let grad = diffusiontoy::aux_loss_grad(&pred, &target, &weights, None, 1e-6)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("gradient norm {norm:.4} over {} values", grad.len());
    Ok(())
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}
