//! Render a small variant dataset, annotate it with a stand-in scorer and
//! export ranking groups for reward training.
//!
//! cargo run --example build_dataset

use lumapolish::dataset::{self, AnnotationRecord, BuildConfig, GroupBy};
use lumapolish::imagecore::{self, ImageRgb};
use lumapolish::metrics::DimensionScores;
use lumapolish::reward::{self, RankingDataset};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir()
        .join("lumapolish-examples")
        .join("dataset");
    let sources = root.join("sources");
    let out = root.join("variants");
    std::fs::create_dir_all(&sources)?;
    for i in 0..3 {
        let img = ImageRgb::from_fn(32, 24, |x, y| {
            let v = 0.05 + 0.03 * i as f64 + 0.004 * (x + y) as f64;
            [v, v * 0.9, v * 1.1]
        })?;
        imagecore::save_image(&img, sources.join(format!("scene{i}.png")))?;
    }

    let cfg = BuildConfig {
        transforms_per_level: 2,
        seed: 17,
        ..Default::default()
    };
    let paths = dataset::list_sources(&sources)?;
    let records = dataset::build_variants(&paths, &out, &cfg)?;
    println!(
        "{} sources x {} levels x {} recipes = {} variants (1000 sources x 4 x 8: {})",
        paths.len(),
        cfg.levels.len(),
        cfg.transforms_per_level,
        records.len(),
        dataset::record_count(1000, 4, 8)
    );
    for r in records.iter().take(4) {
        println!(
            "  {} level {} {} -> {}",
            r.source_id,
            r.brightness_level,
            r.recipe,
            r.output.display()
        );
    }

    // Stand-in annotator: exposure close to 0.5 scores high on every dimension.
    let annotations: Vec<AnnotationRecord> = records
        .iter()
        .map(|r| {
            let img = imagecore::load_image(out.join(&r.output))?;
            let s = (5.0 - 8.0 * (img.mean_luma() - 0.5).abs())
                .clamp(1.0, 5.0)
                .round();
            Ok(AnnotationRecord::new(
                r.output.clone(),
                &r.source_id,
                None,
                DimensionScores::new([s; 5]),
                "script",
            )?)
        })
        .collect::<Result<_, Box<dyn std::error::Error>>>()?;
    let groups = dataset::export_ranking(&annotations, GroupBy::Source)?;
    let ds = RankingDataset::from_groups(&groups, &out)?;
    println!(
        "{} ranking groups, {} preference pairs",
        groups.len(),
        ds.pairs.len()
    );
    let report = reward::train(
        &ds,
        &reward::TrainConfig {
            lr: 0.05,
            epochs: 100,
            ..Default::default()
        },
    )?;
    println!(
        "trained: loss {:.4} -> {:.4}",
        report.losses[0],
        report.final_loss()
    );
    Ok(())
}
