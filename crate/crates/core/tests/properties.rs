mod common;

use lumapolish::brightctl::{self, BoostDirection};
use lumapolish::colorloop::{self, LoopConfig};
use lumapolish::dataset;
use lumapolish::diffusiontoy::{self, AuxWeights, GaussianOracleDenoiser};
use lumapolish::imagecore::{self, ImageGray, ImageRgb};
use lumapolish::metrics;
use lumapolish::promptparse;
use lumapolish::relight::{self, EnhanceConfig, MaskOrigin};
use lumapolish::retinex;
use lumapolish::reward::{self, TrainConfig};
use lumapolish::toolset::{self, ColorOp};
use proptest::prelude::*;

fn image(w: usize, h: usize, lo: f64, hi: f64) -> impl Strategy<Value = ImageRgb> {
    proptest::collection::vec(lo..hi, w * h * 3)
        .prop_map(move |data| ImageRgb::from_vec(w, h, data).unwrap())
}

fn gray(w: usize, h: usize, lo: f64, hi: f64) -> impl Strategy<Value = ImageGray> {
    proptest::collection::vec(lo..hi, w * h)
        .prop_map(move |data| ImageGray::from_vec(w, h, data).unwrap())
}

fn total_variation(values: &[f64], w: usize, h: usize) -> f64 {
    let mut tv = 0.0;
    for y in 0..h {
        for x in 0..w {
            let v = values[y * w + x];
            if x + 1 < w {
                tv += (values[y * w + x + 1] - v).abs();
            }
            if y + 1 < h {
                tv += (values[(y + 1) * w + x] - v).abs();
            }
        }
    }
    tv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hsv_round_trip(r in 0.0..=1.0f64, g in 0.0..=1.0f64, b in 0.0..=1.0f64) {
        let back = imagecore::hsv_to_rgb(imagecore::rgb_to_hsv([r, g, b]));
        for (x, y) in back.iter().zip([r, g, b]) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn blur_stays_within_input_range(img in gray(13, 9, 0.0, 1.0), sigma in 0.0..6.0f64) {
        let out = imagecore::gaussian_blur(&img, sigma);
        prop_assert!(out.min() >= img.min() - 1e-12);
        prop_assert!(out.max() <= img.max() + 1e-12);
    }

    #[test]
    fn retinex_round_trip_on_unclamped_pixels(img in image(12, 10, 0.0, 1.0), sigma in 0.5..16.0f64) {
        let pair = retinex::decompose(&img, sigma).unwrap();
        let back = retinex::reconstruct(&pair);
        for (i, ok) in pair.unclamped_mask(&img).iter().enumerate() {
            if *ok {
                for c in 0..3 {
                    let k = 3 * i + c;
                    prop_assert!((back.data()[k] - img.data()[k]).abs() <= 1e-5);
                }
            }
        }
    }

    #[test]
    fn mean_boost_is_calibrated(illum in gray(16, 12, 0.001, 1.0), ratio in -1.0..1.0f64, sigma in 0.0..5.0f64) {
        let m_init = brightctl::initial_map(&illum);
        let ones = ImageGray::filled(16, 12, 1.0).unwrap();
        let adj = brightctl::spatial_blend(&m_init, ratio, &ones, sigma).unwrap();
        prop_assert!(adj.values().iter().all(|v| (0.0..=brightctl::MAX_BOOST).contains(v)));
        prop_assert!((adj.mean() - ratio.abs()).abs() <= 1e-3, "mean {} ratio {}", adj.mean(), ratio);
    }

    #[test]
    fn smoothing_never_roughens(illum in gray(14, 10, 0.001, 1.0), mask in gray(14, 10, 0.0, 1.0), ratio in 0.05..1.0f64, sigma in 0.5..4.0f64) {
        // The map is the blurred weights times a single rescale factor, so its
        // variation is bounded by that factor times the unblurred variation.
        let m_init = brightctl::initial_map(&illum);
        let Ok(adj) = brightctl::spatial_blend(&m_init, ratio, &mask, sigma) else {
            return Ok(());
        };
        prop_assume!(adj.values().iter().all(|v| *v < brightctl::MAX_BOOST));
        let raw: Vec<f64> = m_init.data().iter().zip(mask.data()).map(|(m, k)| ratio * m * k).collect();
        let bound = adj.scale() * total_variation(&raw, 14, 10);
        // The map is also gated by the mask after blurring, which can add
        // at most the variation of the mask times the largest boost.
        let gate = ratio * adj.scale() * total_variation(mask.data(), 14, 10);
        prop_assert!(total_variation(adj.values(), 14, 10) <= bound + gate + 1e-9);
    }

    #[test]
    fn constant_map_preserves_order(illum in gray(10, 6, 0.001, 1.0), ratio in 0.0..0.8f64) {
        let half = ImageGray::filled(10, 6, 0.5).unwrap();
        let ones = ImageGray::filled(10, 6, 1.0).unwrap();
        let adj = brightctl::spatial_blend(&half, ratio, &ones, 0.0).unwrap();
        prop_assert_eq!(adj.direction(), BoostDirection::Brighten);
        let out = brightctl::apply_to_illumination(&illum, &adj).unwrap();
        for i in 0..illum.data().len() {
            for j in 0..illum.data().len() {
                if illum.data()[i] < illum.data()[j] {
                    prop_assert!(out.data()[i] <= out.data()[j]);
                }
            }
        }
    }

    #[test]
    fn whole_image_brighten_never_darkens(img in image(12, 12, 0.0, 0.8), pct in 1u32..300) {
        let plan = promptparse::parse(&format!("brighten the image by {pct}%")).unwrap();
        let out = relight::enhance_plan(&img, &plan, MaskOrigin::None, &EnhanceConfig::default()).unwrap();
        prop_assert!(out.image.mean_luma() >= img.mean_luma() - 1e-6);
        prop_assert!(out.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn ops_keep_images_in_range(img in image(8, 8, 0.0, 1.0), idx in 0usize..16) {
        let op = colorloop::default_candidates()[idx];
        let out = toolset::apply(&op, &img).unwrap();
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn recipe_text_round_trips(seed in any::<u64>()) {
        let recipe = dataset::random_recipe(seed);
        let text = recipe.to_string();
        let back: toolset::Recipe = text.parse().unwrap();
        prop_assert_eq!(back.to_string(), text);
        prop_assert!(!recipe.ops().is_empty() && recipe.ops().len() <= dataset::MAX_RECIPE_LEN);
    }

    #[test]
    fn brighten_then_darken_by_the_same_adverb_cancels(idx in 0usize..7) {
        let adverb = promptparse::ADVERB_TABLE[idx].0;
        let plan = promptparse::parse(&format!("brighten it {adverb} and darken it {adverb}")).unwrap();
        prop_assert!(plan.brightness_ratio.abs() <= 1e-12);
    }

    #[test]
    fn pair_loss_symmetry(d in -50.0..50.0f64) {
        let lhs = reward::pair_loss(d) - reward::pair_loss(-d);
        prop_assert!((lhs + d).abs() <= 1e-9);
        prop_assert!(reward::pair_loss(d) >= 0.0);
    }

    #[test]
    fn metrics_are_symmetric(a in image(9, 9, 0.0, 1.0), b in image(9, 9, 0.0, 1.0)) {
        let s1 = metrics::ssim(&a, &b).unwrap();
        let s2 = metrics::ssim(&b, &a).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-12 && s1 <= 1.0 + 1e-12);
        prop_assert_eq!(metrics::psnr(&a, &b).unwrap(), metrics::psnr(&b, &a).unwrap());
        prop_assert!(metrics::angular_color_loss(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn schedules_are_monotone(steps in 1usize..400, lo in 1e-5..0.01f64, span in 0.0..0.05f64) {
        let s = diffusiontoy::linear_schedule(steps, lo, lo + span).unwrap();
        let a = s.alphas_cum();
        prop_assert!(a.iter().all(|v| *v > 0.0 && *v < 1.0));
        prop_assert!(a.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn x0_prediction_inverts_noising(x0 in proptest::collection::vec(-3.0..3.0f64, 6), eps in proptest::collection::vec(-3.0..3.0f64, 6), t in 1usize..=100) {
        let s = diffusiontoy::linear_schedule(100, 1e-4, 0.02).unwrap();
        let y = diffusiontoy::forward_noise(&x0, t, &eps, &s).unwrap();
        let back = diffusiontoy::predict_x0(&y, t, &eps, &s).unwrap();
        for (p, q) in back.iter().zip(&x0) {
            prop_assert!((p - q).abs() <= 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn aux_gradient_matches_finite_differences(pred in image(8, 8, 0.1, 0.9), target in image(8, 8, 0.1, 0.9)) {
        let weights = AuxWeights { col: 1.0, ssim: 1.0, reward: 0.0 };
        let g = diffusiontoy::aux_loss_grad(&pred, &target, &weights, None, 1e-6).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..pred.data().len() {
            let at = |d: f64| {
                let mut v = pred.data().to_vec();
                v[i] += d;
                let p = ImageRgb::from_vec(8, 8, v).unwrap();
                diffusiontoy::aux_loss(&p, &target, &weights, 0.0, None).unwrap().total
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs());
            scale = scale.max(fd.abs());
        }
        prop_assert!(worst <= 1e-3 * scale, "abs err {worst:e}, scale {scale:e}");
    }

    #[test]
    fn polishing_only_climbs(img in image(8, 8, 0.0, 0.6), target in 0.2..0.8f64) {
        let scorer = move |i: &ImageRgb| -(i.mean_luma() - target).abs();
        let out = colorloop::autopolish(&img, &scorer, &LoopConfig::default()).unwrap();
        let mut last = out.initial_score;
        for s in out.steps.iter().filter(|s| s.accepted) {
            prop_assert!(s.reward_after > last);
            last = s.reward_after;
        }
        prop_assert!(out.steps.len() <= LoopConfig::default().max_iters);
    }
}

#[test]
fn eta_zero_sampling_is_bit_deterministic() {
    let sched = diffusiontoy::linear_schedule(50, 1e-4, 0.02).unwrap();
    let oracle = GaussianOracleDenoiser::new(0.0, 1.0, &sched);
    let a = diffusiontoy::sample_gaussian(&oracle, &sched, 0.0, 2_000, 3).unwrap();
    let b = diffusiontoy::sample_gaussian(&oracle, &sched, 0.0, 2_000, 3).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn training_loss_never_rises_at_default_lr() {
    let ds = common::luma_preference_dataset(60, 4, 0.0, 5);
    let report = reward::train(&ds, &TrainConfig::default()).unwrap();
    for w in report.losses.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

#[test]
fn explain_is_stable_over_the_corpus() {
    let text = std::fs::read_to_string(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/data/grammar_corpus.txt"
    ))
    .unwrap();
    for line in text
        .lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
    {
        let plan = promptparse::parse(line).unwrap();
        let once = promptparse::explain(&plan);
        let twice = promptparse::explain(&promptparse::parse(&once).unwrap());
        assert_eq!(once, twice, "{line}");
    }
}

#[test]
fn zero_magnitude_ops_are_identity_on_random_images() {
    let mut r = common::rng(4);
    let img = common::random_dim_image(10, 10, &mut r);
    for op in [
        ColorOp::Brightness(0.0),
        ColorOp::Contrast(0.0),
        ColorOp::Saturation(0.0),
        ColorOp::WhiteBalance(0.0),
        ColorOp::ToneTint(0.0),
        ColorOp::Gamma(1.0),
    ] {
        assert_eq!(toolset::apply(&op, &img).unwrap(), img, "{op}");
    }
}
