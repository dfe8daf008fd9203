mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lumapolish::imagecore::{self, ImageGray, ImageRgb};
use lumapolish::reward::{self, FeatureNorms, FeatureVector, RewardModel};

fn lumapolish(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lumapolish"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_dim_image(path: &Path, seed: u64) -> ImageRgb {
    let mut r = common::rng(seed);
    let img = common::random_dim_image(24, 20, &mut r);
    imagecore::save_image(&img, path).unwrap();
    imagecore::load_image(path).unwrap()
}

fn luma_model() -> RewardModel {
    let mut w = [0.0; reward::FEATURE_COUNT];
    w[0] = 1.0;
    RewardModel::new(FeatureVector::from_array(w), 0.0, FeatureNorms::identity())
}

#[test]
fn enhance_brightens_and_prints_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let out = dir.path().join("out.png");
    let summary = dir.path().join("summary.json");
    let heat = dir.path().join("heat.png");
    let before = write_dim_image(&input, 1);
    let o = lumapolish(&[
        "enhance",
        "--image",
        p(&input),
        "--prompt",
        "brighten the image by 30%",
        "--out",
        p(&out),
        "--summary-out",
        p(&summary),
        "--adjust-map-out",
        p(&heat),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let after = imagecore::load_image(&out).unwrap();
    assert!(after.mean_luma() > before.mean_luma());
    let printed: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(printed, saved);
    assert!(
        printed["mean_luma_after"].as_f64().unwrap()
            > printed["mean_luma_before"].as_f64().unwrap()
    );
    assert_eq!(imagecore::load_gray(&heat).unwrap().dims(), (24, 20));
}

#[test]
fn enhance_with_a_mask_file_leaves_the_rest_alone() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let mask_path = dir.path().join("mask.png");
    let out = dir.path().join("out.png");
    let before = write_dim_image(&input, 2);
    let mask = ImageGray::from_fn(24, 20, |x, _| if x < 8 { 1.0 } else { 0.0 }).unwrap();
    imagecore::save_gray(&mask, &mask_path).unwrap();
    let o = lumapolish(&[
        "--quiet",
        "enhance",
        "--image",
        p(&input),
        "--prompt",
        "brighten the lamp a lot",
        "--mask",
        p(&mask_path),
        "--feather",
        "1",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let after = imagecore::load_image(&out).unwrap();
    for y in 0..20 {
        for x in 11..24 {
            assert_eq!(after.get(x, y), before.get(x, y));
        }
    }
}

#[test]
fn bad_prompt_exits_three_with_a_caret() {
    let o = lumapolish(&["enhance", "--prompt", "frobnicate"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("bytes 0..10"), "{err}");
    assert!(err.contains("^^^^^^^^^^"), "{err}");
}

#[test]
fn named_region_without_a_mask_is_a_compute_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    write_dim_image(&input, 3);
    let o = lumapolish(&[
        "enhance",
        "--image",
        p(&input),
        "--prompt",
        "brighten the sky",
        "--out",
        p(&dir.path().join("o.png")),
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    let o = lumapolish(&[
        "enhance",
        "--image",
        p(&input),
        "--prompt",
        "brighten the sky",
        "--heuristic-mask",
        "--out",
        p(&dir.path().join("o.png")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn exit_codes_for_usage_and_io() {
    assert_eq!(lumapolish(&[]).status.code(), Some(1));
    assert_eq!(lumapolish(&["enhance", "--bogus"]).status.code(), Some(1));
    let o = lumapolish(&["eval", "--ref", "/no/such.png", "--test", "/no/such.png"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.png");
    fs::write(&junk, b"not a png").unwrap();
    let o = lumapolish(&["eval", "--ref", p(&junk), "--test", p(&junk)]);
    assert_eq!(o.status.code(), Some(2));
    let bad_model = dir.path().join("m.json");
    fs::write(&bad_model, "{").unwrap();
    let o = lumapolish(&["score", "--model", p(&bad_model), "--image", p(&junk)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn score_prints_the_library_value() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.png");
    let model_path = dir.path().join("m.json");
    let img = write_dim_image(&input, 4);
    let model = luma_model();
    model.save(&model_path).unwrap();
    let o = lumapolish(&["score", "--model", p(&model_path), "--image", p(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let printed: f64 = stdout(&o).trim().parse().unwrap();
    assert_eq!(printed, reward::score(&model, &img).unwrap());
}

#[test]
fn eval_prints_three_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.ppm");
    imagecore::save_image(&ImageRgb::filled(16, 16, [0.5; 3]).unwrap(), &a).unwrap();
    imagecore::save_image(&ImageRgb::filled(16, 16, [0.6; 3]).unwrap(), &b).unwrap();
    let o = lumapolish(&["eval", "--ref", p(&a), "--test", p(&b)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // 8-bit storage: 128/255 vs 153/255.
    let expected = 20.0 * (255.0f64 / 25.0).log10();
    assert!((v["psnr"].as_f64().unwrap() - expected).abs() < 1e-9);
    assert!(v["ssim"].is_number());
    assert_eq!(v["angular_color"].as_f64().unwrap(), 0.0);
}

#[test]
fn decompose_writes_stem_named_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("night.png");
    write_dim_image(&input, 5);
    let o = lumapolish(&["decompose", "--image", p(&input), "--sigma", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("night_illum.png").exists());
    assert!(dir.path().join("night_refl.png").exists());
}

#[test]
fn dataset_training_scoring_and_polishing() {
    let dir = tempfile::tempdir().unwrap();
    let sources = dir.path().join("sources");
    fs::create_dir(&sources).unwrap();
    for i in 0..3 {
        write_dim_image(&sources.join(format!("s{i}.png")), 10 + i);
    }
    let build = |out: &Path, threads: &str| {
        let o = lumapolish(&[
            "--seed",
            "9",
            "build-dataset",
            "--sources-dir",
            p(&sources),
            "--out-dir",
            p(out),
            "--levels",
            "1.1,2.0",
            "--per-level",
            "3",
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    build(&a, "1");
    build(&b, "3");
    let manifest = fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    assert_eq!(
        manifest,
        fs::read_to_string(b.join("manifest.jsonl")).unwrap()
    );
    assert_eq!(manifest.lines().count(), 18);
    for line in manifest.lines() {
        let rec: serde_json::Value = serde_json::from_str(line).unwrap();
        let name = rec["output"].as_str().unwrap();
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap()
        );
    }

    // Rank each source's variants by brightness and train on that.
    let rankings = a.join("rankings.jsonl");
    let mut lines = String::new();
    for i in 0..3 {
        let mut imgs: Vec<(f64, String)> = manifest
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
            .filter(|r| r["source_id"] == format!("s{i}"))
            .map(|r| {
                let name = r["output"].as_str().unwrap().to_string();
                (
                    imagecore::load_image(a.join(&name)).unwrap().mean_luma(),
                    name,
                )
            })
            .collect();
        imgs.sort_by(|x, y| y.0.total_cmp(&x.0));
        imgs.truncate(6);
        let group = serde_json::json!({
            "prompt": "make it brighter",
            "images": imgs.iter().map(|x| &x.1).collect::<Vec<_>>(),
            "scores": imgs.iter().map(|x| x.0).collect::<Vec<_>>(),
        });
        lines.push_str(&format!("{group}\n"));
    }
    fs::write(&rankings, lines).unwrap();
    let model = dir.path().join("model.json");
    let train = |seed: &str| {
        let o = lumapolish(&[
            "--seed",
            seed,
            "train-reward",
            "--rankings",
            p(&rankings),
            "--out",
            p(&model),
            "--lr",
            "0.05",
            "--epochs",
            "50",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(&model).unwrap()
    };
    assert_eq!(train("1"), train("1"));

    let input = sources.join("s0.png");
    let polished = dir.path().join("polished.png");
    let trace = dir.path().join("trace.json");
    let o = lumapolish(&[
        "autopolish",
        "--image",
        p(&input),
        "--model",
        p(&model),
        "--out",
        p(&polished),
        "--trace-out",
        p(&trace),
        "--prompt",
        "brighten it a little",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let steps: Vec<serde_json::Value> =
        serde_json::from_str(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(!steps.is_empty() && steps.len() <= 10);
    for s in &steps {
        for key in ["op", "reward_before", "reward_after", "accepted"] {
            assert!(s.get(key).is_some(), "missing {key}");
        }
    }
    let final_score: f64 = stdout(&o).trim().parse().unwrap();
    let trained = RewardModel::load(&model).unwrap();
    let out_img = imagecore::load_image(&polished).unwrap();
    // The saved PNG is quantized, so compare loosely.
    assert!((reward::score(&trained, &out_img).unwrap() - final_score).abs() < 0.05);
}

#[test]
fn ddim_demo_is_reproducible() {
    let run = |seed: &str| {
        let o = lumapolish(&[
            "--seed",
            seed,
            "ddim-demo",
            "--steps",
            "20",
            "--eta",
            "0.5",
            "--trajectories",
            "500",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    let a = run("4");
    assert_eq!(a, run("4"));
    assert_ne!(a, run("5"));
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("trajectory,y0"));
    assert_eq!(lines.count(), 500);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("y.csv");
    let o = lumapolish(&["ddim-demo", "--trajectories", "2000", "--out", p(&csv)]);
    assert!(o.status.success());
    let summary: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(summary["mean"].as_f64().unwrap().abs() < 0.1);
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2001);
}

#[test]
fn help_lists_every_documented_flag() {
    let top = stdout(&lumapolish(&["--help"]));
    for f in ["--seed", "--quiet", "--version"] {
        assert!(top.contains(f), "{f}");
    }
    let per_command: &[(&str, &[&str])] = &[
        (
            "enhance",
            &[
                "--image",
                "--prompt",
                "--mask",
                "--out",
                "--feather",
                "--heuristic-mask",
                "--adjust-map-out",
            ],
        ),
        ("decompose", &["--image", "--sigma"]),
        (
            "autopolish",
            &["--image", "--model", "--out", "--trace-out", "--prompt"],
        ),
        (
            "build-dataset",
            &[
                "--sources-dir",
                "--out-dir",
                "--levels",
                "--per-level",
                "--seed",
            ],
        ),
        (
            "train-reward",
            &["--rankings", "--out", "--lr", "--batch", "--epochs"],
        ),
        ("score", &["--model", "--image"]),
        ("eval", &["--ref", "--test"]),
        (
            "ddim-demo",
            &["--steps", "--eta", "--trajectories", "--seed"],
        ),
    ];
    for (cmd, flags) in per_command {
        let help = stdout(&lumapolish(&[cmd, "--help"]));
        for f in *flags {
            assert!(help.contains(f), "{cmd} help lacks {f}");
        }
    }
    let v = lumapolish(&["--version"]);
    assert!(v.status.success());
    assert!(stdout(&v).contains(env!("CARGO_PKG_VERSION")));
}
