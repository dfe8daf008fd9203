//! Train the aesthetic reward model on ranked groups of synthetic exposures
//! and report pairwise accuracy on groups it has not seen.
//!
//! cargo run --release --example train_reward [-- <lr> <epochs>]

use lumapolish::imagecore::ImageRgb;
use lumapolish::reward::{self, FeatureVector, RankingDataset, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Groups of exposures of one random texture, ranked by how close their
/// mean luma is to 0.55.
fn dataset(groups: usize, seed: u64) -> RankingDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = RankingDataset::default();
    for g in 0..groups {
        let base: Vec<f64> = (0..24 * 24).map(|_| rng.random_range(0.05..0.45)).collect();
        let mut imgs: Vec<(f64, ImageRgb)> = (0..4)
            .map(|_| {
                let gain: f64 = rng.random_range(0.5..1.2);
                let img = ImageRgb::from_fn(24, 24, |x, y| [(base[y * 24 + x] * gain).min(1.0); 3])
                    .unwrap();
                (-(img.mean_luma() - 0.55).abs(), img)
            })
            .collect();
        imgs.sort_by(|a, b| b.0.total_cmp(&a.0));
        let keys: Vec<f64> = imgs.iter().map(|p| p.0).collect();
        let images: Vec<ImageRgb> = imgs.into_iter().map(|p| p.1).collect();
        ds.push_group(&format!("group {g}"), &images, &keys)
            .unwrap();
    }
    ds
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let lr = args
        .next()
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(reward::DEFAULT_LR);
    let epochs = args.next().map(|s| s.parse()).transpose()?.unwrap_or(200);

    let train = dataset(120, 1);
    let test = dataset(40, 2);
    let cfg = TrainConfig {
        lr,
        epochs,
        ..Default::default()
    };
    let report = reward::train(&train, &cfg)?;
    println!(
        "{} pairs, lr {lr}, {epochs} epochs: loss {:.6} -> {:.6}",
        train.pairs.len(),
        report.losses[0],
        report.final_loss()
    );
    println!(
        "train accuracy {:.4}, held-out accuracy {:.4}",
        reward::pairwise_accuracy(&report.model, &train.pairs, &train.features)?,
        reward::pairwise_accuracy(&report.model, &test.pairs, &test.features)?
    );
    for (name, w) in FeatureVector::NAMES
        .iter()
        .zip(report.model.weights.to_array())
    {
        println!("  {name:<20} {w:+.3e}");
    }
    Ok(())
}
