//! Feature-linear aesthetic reward model trained with a pairwise ranking loss.
//!
//! An image is summarized by ten classical statistics ([`FeatureVector`]),
//! standardized with training-set moments, and scored by a linear head.
//! Training minimizes `-log σ(f(better) - f(worse))` over ranked pairs.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{self, luma_of, rgb_to_hsv, ImageError, ImageRgb};

pub const FEATURE_COUNT: usize = 10;
/// Format tag written into every model file.
pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Luma at or below this counts as crushed shadow.
pub const CLIP_LOW: f64 = 0.02;
/// Luma at or above this counts as blown highlight.
pub const CLIP_HIGH: f64 = 0.98;
pub const ENTROPY_BINS: usize = 64;
/// Ranking groups must hold between these many images.
pub const GROUP_SIZE_RANGE: (usize, usize) = (2, 9);
pub const DEFAULT_LR: f64 = 1e-5;
pub const DEFAULT_BATCH: usize = 64;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("model has no feature normalization")]
    Uninitialized,
    #[error("ranking group has {0} images; need between 2 and 9")]
    GroupSize(usize),
    #[error("ranking group lists {images} images but {scores} scores")]
    GroupShape { images: usize, scores: usize },
    #[error("no comparison pairs")]
    NoPairs,
    #[error("every pair is tied")]
    AllTied,
    #[error("learning rate must be positive, got {0}")]
    BadLearningRate(f64),
    #[error("batch size must be at least 1")]
    BadBatch,
    #[error("feature std for {name} must be positive, got {value}")]
    BadNorm { name: &'static str, value: f64 },
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Ten image statistics. Serialized with named fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mean_luma: f64,
    pub std_luma: f64,
    pub clip_low_fraction: f64,
    pub clip_high_fraction: f64,
    pub rms_contrast: f64,
    pub mean_saturation: f64,
    pub colorfulness: f64,
    pub sharpness: f64,
    pub entropy: f64,
    pub hue_dispersion: f64,
}

impl FeatureVector {
    pub const NAMES: [&'static str; FEATURE_COUNT] = [
        "mean_luma",
        "std_luma",
        "clip_low_fraction",
        "clip_high_fraction",
        "rms_contrast",
        "mean_saturation",
        "colorfulness",
        "sharpness",
        "entropy",
        "hue_dispersion",
    ];

    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        [
            self.mean_luma,
            self.std_luma,
            self.clip_low_fraction,
            self.clip_high_fraction,
            self.rms_contrast,
            self.mean_saturation,
            self.colorfulness,
            self.sharpness,
            self.entropy,
            self.hue_dispersion,
        ]
    }

    pub fn from_array(a: [f64; FEATURE_COUNT]) -> Self {
        Self {
            mean_luma: a[0],
            std_luma: a[1],
            clip_low_fraction: a[2],
            clip_high_fraction: a[3],
            rms_contrast: a[4],
            mean_saturation: a[5],
            colorfulness: a[6],
            sharpness: a[7],
            entropy: a[8],
            hue_dispersion: a[9],
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_pop(xs: &[f64], mu: f64) -> f64 {
    (xs.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Variance of the 4-neighbour Laplacian of luma, edges replicated.
fn laplacian_variance(luma: &[f64], w: usize, h: usize) -> f64 {
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        luma[y * w + x]
    };
    let mut lap = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            lap.push(4.0 * at(x, y) - at(x - 1, y) - at(x + 1, y) - at(x, y - 1) - at(x, y + 1));
        }
    }
    let mu = mean(&lap);
    std_pop(&lap, mu).powi(2)
}

/// Shannon entropy in bits of a 64-bin luma histogram.
fn histogram_entropy(luma: &[f64]) -> f64 {
    let mut counts = [0usize; ENTROPY_BINS];
    for &v in luma {
        counts[((v * ENTROPY_BINS as f64) as usize).min(ENTROPY_BINS - 1)] += 1;
    }
    let n = luma.len() as f64;
    -counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            p * p.log2()
        })
        .sum::<f64>()
}

/// Circular standard deviation of hue in radians, each pixel weighted by
/// its saturation. Zero when nothing is saturated.
fn hue_dispersion(hsv: &[[f64; 3]]) -> f64 {
    let (mut c, mut s, mut wsum) = (0.0, 0.0, 0.0);
    for &[h, sat, _] in hsv {
        let t = h.to_radians();
        c += sat * t.cos();
        s += sat * t.sin();
        wsum += sat;
    }
    if wsum == 0.0 {
        return 0.0;
    }
    let r = ((c * c + s * s).sqrt() / wsum).clamp(1e-12, 1.0);
    (-2.0 * r.ln()).sqrt()
}

/// Compute the ten statistics of `img`.
pub fn extract_features(img: &ImageRgb) -> FeatureVector {
    let (w, h) = img.dims();
    let luma: Vec<f64> = img.pixels().map(luma_of).collect();
    let mean_luma = mean(&luma);
    let std_luma = std_pop(&luma, mean_luma);
    let n = luma.len() as f64;
    let clip_low_fraction = luma.iter().filter(|&&v| v <= CLIP_LOW).count() as f64 / n;
    let clip_high_fraction = luma.iter().filter(|&&v| v >= CLIP_HIGH).count() as f64 / n;

    let all = img.data();
    let rms_contrast = std_pop(all, mean(all));

    let hsv: Vec<[f64; 3]> = img.pixels().map(rgb_to_hsv).collect();
    let mean_saturation = hsv.iter().map(|p| p[1]).sum::<f64>() / n;

    let rg: Vec<f64> = img.pixels().map(|[r, g, _]| r - g).collect();
    let yb: Vec<f64> = img.pixels().map(|[r, g, b]| 0.5 * (r + g) - b).collect();
    let (mrg, myb) = (mean(&rg), mean(&yb));
    let (srg, syb) = (std_pop(&rg, mrg), std_pop(&yb, myb));
    let colorfulness = (srg * srg + syb * syb).sqrt() + 0.3 * (mrg * mrg + myb * myb).sqrt();

    FeatureVector {
        mean_luma,
        std_luma,
        clip_low_fraction,
        clip_high_fraction,
        rms_contrast,
        mean_saturation,
        colorfulness,
        sharpness: laplacian_variance(&luma, w, h),
        entropy: histogram_entropy(&luma),
        hue_dispersion: hue_dispersion(&hsv),
    }
}

/// Per-feature standardization moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorms {
    pub mean: FeatureVector,
    pub std: FeatureVector,
}

impl FeatureNorms {
    /// Mean 0, std 1: scores see raw features.
    pub fn identity() -> Self {
        Self {
            mean: FeatureVector::default(),
            std: FeatureVector::from_array([1.0; FEATURE_COUNT]),
        }
    }

    /// Moments of `features`; a constant feature gets std 1.
    pub fn fit(features: &[FeatureVector]) -> Self {
        let mut mu = [0.0; FEATURE_COUNT];
        let mut sd = [1.0; FEATURE_COUNT];
        for k in 0..FEATURE_COUNT {
            let col: Vec<f64> = features.iter().map(|f| f.to_array()[k]).collect();
            mu[k] = mean(&col);
            let s = std_pop(&col, mu[k]);
            if s > 0.0 {
                sd[k] = s;
            }
        }
        Self {
            mean: FeatureVector::from_array(mu),
            std: FeatureVector::from_array(sd),
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        for (name, value) in FeatureVector::NAMES.iter().zip(self.std.to_array()) {
            if !(value > 0.0 && value.is_finite()) {
                return Err(RewardError::BadNorm { name, value });
            }
        }
        Ok(())
    }

    pub fn normalize(&self, f: &FeatureVector) -> [f64; FEATURE_COUNT] {
        let (x, m, s) = (f.to_array(), self.mean.to_array(), self.std.to_array());
        std::array::from_fn(|k| (x[k] - m[k]) / s[k])
    }
}

/// Linear head over standardized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub format_version: u32,
    pub weights: FeatureVector,
    pub bias: f64,
    #[serde(default)]
    pub norms: Option<FeatureNorms>,
}

impl RewardModel {
    pub fn new(weights: FeatureVector, bias: f64, norms: FeatureNorms) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            weights,
            bias,
            norms: Some(norms),
        }
    }

    pub fn zeros(norms: FeatureNorms) -> Self {
        Self::new(FeatureVector::default(), 0.0, norms)
    }

    fn norms(&self) -> Result<&FeatureNorms, RewardError> {
        self.norms.as_ref().ok_or(RewardError::Uninitialized)
    }

    /// `θ · φ + bias` for already-standardized features.
    pub fn score_normalized(&self, phi: &[f64; FEATURE_COUNT]) -> f64 {
        self.weights
            .to_array()
            .iter()
            .zip(phi)
            .map(|(w, p)| w * p)
            .sum::<f64>()
            + self.bias
    }

    pub fn score_features(&self, f: &FeatureVector) -> Result<f64, RewardError> {
        Ok(self.score_normalized(&self.norms()?.normalize(f)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RewardError> {
        let model: RewardModel = serde_json::from_str(text).map_err(|e| RewardError::Format {
            path: "<model>".into(),
            message: e.to_string(),
        })?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(RewardError::Version(model.format_version));
        }
        if let Some(n) = &model.norms {
            n.validate()?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RewardError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| RewardError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RewardError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RewardError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text).map_err(|e| match e {
            RewardError::Format { message, .. } => RewardError::Format {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }
}

/// Anything that maps an image to a scalar preference.
pub trait ImageScorer: Sync {
    fn score(&self, img: &ImageRgb) -> Result<f64, RewardError>;
}

impl ImageScorer for RewardModel {
    fn score(&self, img: &ImageRgb) -> Result<f64, RewardError> {
        self.score_features(&extract_features(img))
    }
}

impl<F> ImageScorer for F
where
    F: Fn(&ImageRgb) -> f64 + Sync,
{
    fn score(&self, img: &ImageRgb) -> Result<f64, RewardError> {
        Ok(self(img))
    }
}

/// `f(img)` under `model`.
pub fn score(model: &RewardModel, img: &ImageRgb) -> Result<f64, RewardError> {
    ImageScorer::score(model, img)
}

/// One ordered preference; `better` and `worse` index an image store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonPair {
    pub prompt: String,
    pub better: usize,
    pub worse: usize,
}

/// Expand a best-first ranking into pairs. `keys[i]` is the annotated score
/// or rank of `ranked[i]`; equal keys are ties and produce no pair.
pub fn pairs_from_ranking(
    prompt: &str,
    ranked: &[usize],
    keys: &[f64],
) -> Result<Vec<ComparisonPair>, RewardError> {
    let k = ranked.len();
    if k != keys.len() {
        return Err(RewardError::GroupShape {
            images: k,
            scores: keys.len(),
        });
    }
    if !(GROUP_SIZE_RANGE.0..=GROUP_SIZE_RANGE.1).contains(&k) {
        return Err(RewardError::GroupSize(k));
    }
    let mut pairs = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            if keys[i] == keys[j] || ranked[i] == ranked[j] {
                continue;
            }
            pairs.push(ComparisonPair {
                prompt: prompt.to_string(),
                better: ranked[i],
                worse: ranked[j],
            });
        }
    }
    Ok(pairs)
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-log σ(d)` for one score difference.
pub fn pair_loss(diff: f64) -> f64 {
    softplus(-diff)
}

/// Standardized features for a pair set: `(φ_better, φ_worse)` rows.
#[derive(Debug, Clone)]
pub struct PairFeatures {
    pub better: Vec<[f64; FEATURE_COUNT]>,
    pub worse: Vec<[f64; FEATURE_COUNT]>,
}

impl PairFeatures {
    pub fn new(features: &[FeatureVector], pairs: &[ComparisonPair], norms: &FeatureNorms) -> Self {
        let phi: Vec<_> = features.iter().map(|f| norms.normalize(f)).collect();
        Self {
            better: pairs.iter().map(|p| phi[p.better]).collect(),
            worse: pairs.iter().map(|p| phi[p.worse]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.better.len()
    }

    pub fn is_empty(&self) -> bool {
        self.better.is_empty()
    }
}

fn loss_and_grad_on(
    model: &RewardModel,
    pf: &PairFeatures,
    idx: &[usize],
) -> (f64, [f64; FEATURE_COUNT]) {
    let mut loss = 0.0;
    let mut grad = [0.0; FEATURE_COUNT];
    for &i in idx {
        let (b, w) = (&pf.better[i], &pf.worse[i]);
        let diff = model.score_normalized(b) - model.score_normalized(w);
        loss += pair_loss(diff);
        let g = 1.0 - sigmoid(diff);
        for k in 0..FEATURE_COUNT {
            grad[k] -= g * (b[k] - w[k]);
        }
    }
    let n = idx.len() as f64;
    (loss / n, grad.map(|g| g / n))
}

/// Mean ranking loss over all pairs and its gradient in the weights.
/// The bias cancels in every difference, so it has no gradient.
pub fn loss_and_grad(
    model: &RewardModel,
    pf: &PairFeatures,
) -> Result<(f64, [f64; FEATURE_COUNT]), RewardError> {
    if pf.is_empty() {
        return Err(RewardError::NoPairs);
    }
    let idx: Vec<usize> = (0..pf.len()).collect();
    Ok(loss_and_grad_on(model, pf, &idx))
}

/// Mean of `-log σ(f(better) - f(worse))` over `pairs`.
pub fn ranking_loss(
    model: &RewardModel,
    pairs: &[ComparisonPair],
    features: &[FeatureVector],
) -> Result<f64, RewardError> {
    if pairs.is_empty() {
        return Err(RewardError::NoPairs);
    }
    let scores: Vec<f64> = features
        .iter()
        .map(|f| model.score_features(f))
        .collect::<Result<_, _>>()?;
    Ok(pairs
        .iter()
        .map(|p| pair_loss(scores[p.better] - scores[p.worse]))
        .sum::<f64>()
        / pairs.len() as f64)
}

/// Fraction of pairs the model orders strictly correctly.
pub fn pairwise_accuracy(
    model: &RewardModel,
    pairs: &[ComparisonPair],
    features: &[FeatureVector],
) -> Result<f64, RewardError> {
    if pairs.is_empty() {
        return Err(RewardError::NoPairs);
    }
    let scores: Vec<f64> = features
        .iter()
        .map(|f| model.score_features(f))
        .collect::<Result<_, _>>()?;
    let good = pairs
        .iter()
        .filter(|p| scores[p.better] > scores[p.worse])
        .count();
    Ok(good as f64 / pairs.len() as f64)
}

/// Images (as features) plus the preference pairs over them.
#[derive(Debug, Clone, Default)]
pub struct RankingDataset {
    pub features: Vec<FeatureVector>,
    pub pairs: Vec<ComparisonPair>,
}

impl RankingDataset {
    /// Add one best-first group of images with their annotated keys.
    pub fn push_group(
        &mut self,
        prompt: &str,
        images: &[ImageRgb],
        keys: &[f64],
    ) -> Result<(), RewardError> {
        let start = self.features.len();
        let ids: Vec<usize> = (start..start + images.len()).collect();
        let pairs = pairs_from_ranking(prompt, &ids, keys)?;
        self.features.extend(images.iter().map(extract_features));
        self.pairs.extend(pairs);
        Ok(())
    }

    /// Read ranking groups and decode their images. Relative image paths
    /// resolve against `base_dir`.
    pub fn from_groups(groups: &[RankingGroup], base_dir: &Path) -> Result<Self, RewardError> {
        let mut ds = RankingDataset::default();
        for g in groups {
            let images = g
                .images
                .iter()
                .map(|p| imagecore::load_image(base_dir.join(p)))
                .collect::<Result<Vec<_>, _>>()?;
            ds.push_group(&g.prompt, &images, &g.scores)?;
        }
        Ok(ds)
    }
}

/// One line of a ranking file: images best-first with their scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingGroup {
    pub prompt: String,
    pub images: Vec<PathBuf>,
    pub scores: Vec<f64>,
}

/// Parse JSON-lines ranking groups; blank lines are skipped.
pub fn read_ranking_file(path: impl AsRef<Path>) -> Result<Vec<RankingGroup>, RewardError> {
    let path = path.as_ref();
    let io_err = |source| RewardError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut groups = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let g: RankingGroup = serde_json::from_str(&line).map_err(|e| RewardError::Format {
            path: format!("{}:{}", path.display(), n + 1),
            message: e.to_string(),
        })?;
        groups.push(g);
    }
    Ok(groups)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: DEFAULT_LR,
            batch: DEFAULT_BATCH,
            epochs: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: RewardModel,
    /// Full-dataset loss before training and after each epoch.
    pub losses: Vec<f64>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least the initial loss")
    }
}

/// Mini-batch gradient descent on the ranking loss from a zero-weight model
/// whose norms are fitted to `ds.features`.
pub fn train(ds: &RankingDataset, cfg: &TrainConfig) -> Result<TrainReport, RewardError> {
    if !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(RewardError::BadLearningRate(cfg.lr));
    }
    if cfg.batch == 0 {
        return Err(RewardError::BadBatch);
    }
    if ds.pairs.is_empty() {
        return Err(RewardError::AllTied);
    }
    let norms = FeatureNorms::fit(&ds.features);
    let pf = PairFeatures::new(&ds.features, &ds.pairs, &norms);
    let mut model = RewardModel::zeros(norms);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pf.len()).collect();
    let mut losses = vec![loss_and_grad(&model, &pf)?.0];
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let (_, grad) = loss_and_grad_on(&model, &pf, chunk);
            let mut w = model.weights.to_array();
            for k in 0..FEATURE_COUNT {
                w[k] -= cfg.lr * grad[k];
            }
            model.weights = FeatureVector::from_array(w);
        }
        losses.push(loss_and_grad(&model, &pf)?.0);
    }
    Ok(TrainReport { model, losses })
}
