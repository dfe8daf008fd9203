//! Preference-dataset construction: brightness-level expansion, seeded random
//! recipes, manifests, annotation records and ranking export.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::imagecore::{self, ImageError, ImageRgb};
use crate::metrics::{self, DimensionScores, MetricsError};
use crate::reward::{self, RankingGroup, RewardError, RewardModel, GROUP_SIZE_RANGE};
use crate::toolset::{self, ColorOp, Recipe, ToolError};

/// Brightness multipliers for +10%, +30%, +100% and +150%.
pub const BRIGHTNESS_LEVELS: [f64; 4] = [1.10, 1.30, 2.00, 2.50];
pub const DEFAULT_PER_LEVEL: usize = 8;
/// Recipes hold between one and this many ops.
pub const MAX_RECIPE_LEN: usize = 4;
pub const MANIFEST_NAME: &str = "manifest.jsonl";
/// Tolerance when checking a stored total against its scores.
pub const TOTAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no source images")]
    NoSources,
    #[error("transforms per level must be at least 1")]
    NoTransforms,
    #[error("brightness level {0} must be a finite multiplier in (0.1, 5]")]
    BadLevel(f64),
    #[error("duplicate source id {0:?}")]
    DuplicateSource(String),
    #[error("group {key:?} has {k} records; need between 2 and 9")]
    GroupSize { key: String, k: usize },
    #[error("record {variant:?} has no prompt to group by")]
    MissingPrompt { variant: String },
    #[error("record {variant:?}: stored total {stored} but scores give {computed}")]
    TotalMismatch {
        variant: String,
        stored: f64,
        computed: f64,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// `|sources| × |levels| × transforms_per_level`.
pub fn record_count(sources: usize, levels: usize, transforms_per_level: usize) -> usize {
    sources * levels * transforms_per_level
}

/// Per-record seed: the first eight bytes of SHA-256 over the master seed,
/// the length-prefixed source id and both indices.
pub fn derive_seed(
    master: u64,
    source_id: &str,
    level_index: usize,
    transform_index: usize,
) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((source_id.len() as u64).to_le_bytes());
    h.update(source_id.as_bytes());
    h.update((level_index as u64).to_le_bytes());
    h.update((transform_index as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("eight bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OpKind {
    Contrast,
    WhiteBalance,
    Sharpen,
    Smooth,
    ToneTint,
    Saturation,
    Gamma,
}

const MENU: [OpKind; 7] = [
    OpKind::Contrast,
    OpKind::WhiteBalance,
    OpKind::Sharpen,
    OpKind::Smooth,
    OpKind::ToneTint,
    OpKind::Saturation,
    OpKind::Gamma,
];

/// Uniform draw from `[lo, hi]` rounded to 0.01.
fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..=hi) * 100.0).round() / 100.0
}

impl OpKind {
    /// Parameter ranges for random recipes.
    fn sample(self, rng: &mut ChaCha8Rng) -> ColorOp {
        match self {
            OpKind::Contrast => ColorOp::Contrast(draw(rng, -0.3, 0.5)),
            OpKind::WhiteBalance => ColorOp::WhiteBalance(draw(rng, -0.15, 0.15)),
            OpKind::Sharpen => ColorOp::Sharpen {
                amount: draw(rng, 0.2, 1.5),
                radius: draw(rng, 0.5, 2.0),
            },
            OpKind::Smooth => ColorOp::Smooth(draw(rng, 0.5, 2.0)),
            OpKind::ToneTint => ColorOp::ToneTint(draw(rng, -20.0, 20.0)),
            OpKind::Saturation => ColorOp::Saturation(draw(rng, -0.3, 0.5)),
            OpKind::Gamma => ColorOp::Gamma(draw(rng, 0.7, 1.5)),
        }
    }
}

/// One to four distinct op kinds in random order with random parameters.
pub fn random_recipe(seed: u64) -> Recipe {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.random_range(1..=MAX_RECIPE_LEN);
    let kinds = rand::seq::index::sample(&mut rng, MENU.len(), len);
    Recipe(kinds.iter().map(|k| MENU[k].sample(&mut rng)).collect())
}

/// What to render for one record, before any file I/O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantPlan {
    pub source_id: String,
    pub source_index: usize,
    pub level_index: usize,
    pub transform_index: usize,
    pub brightness_level: f64,
    pub recipe: Recipe,
    pub seed: u64,
}

impl VariantPlan {
    /// Brightness first, then the recipe.
    pub fn full_ops(&self) -> Vec<ColorOp> {
        let mut ops = vec![ColorOp::Brightness(self.brightness_level - 1.0)];
        ops.extend_from_slice(self.recipe.ops());
        ops
    }

    pub fn file_name(&self) -> String {
        format!(
            "{}_l{}_t{}.png",
            self.source_id, self.level_index, self.transform_index
        )
    }
}

fn check_levels(levels: &[f64]) -> Result<(), DatasetError> {
    match levels
        .iter()
        .find(|l| !(l.is_finite() && **l > 0.1 && **l <= 5.0))
    {
        Some(&l) => Err(DatasetError::BadLevel(l)),
        None => Ok(()),
    }
}

/// Enumerate every record in (source, level, transform) order.
pub fn plan_variants(
    source_ids: &[String],
    levels: &[f64],
    transforms_per_level: usize,
    seed: u64,
) -> Result<Vec<VariantPlan>, DatasetError> {
    if source_ids.is_empty() || levels.is_empty() {
        return Err(DatasetError::NoSources);
    }
    if transforms_per_level == 0 {
        return Err(DatasetError::NoTransforms);
    }
    check_levels(levels)?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = source_ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(DatasetError::DuplicateSource(dup.clone()));
    }
    let mut plans = Vec::with_capacity(record_count(
        source_ids.len(),
        levels.len(),
        transforms_per_level,
    ));
    for (si, id) in source_ids.iter().enumerate() {
        for (li, &level) in levels.iter().enumerate() {
            for ti in 0..transforms_per_level {
                let record_seed = derive_seed(seed, id, li, ti);
                plans.push(VariantPlan {
                    source_id: id.clone(),
                    source_index: si,
                    level_index: li,
                    transform_index: ti,
                    brightness_level: level,
                    recipe: random_recipe(record_seed),
                    seed: record_seed,
                });
            }
        }
    }
    Ok(plans)
}

pub fn render_variant(source: &ImageRgb, plan: &VariantPlan) -> Result<ImageRgb, DatasetError> {
    Ok(toolset::compose(&plan.full_ops(), source)?)
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub source_id: String,
    pub brightness_level: f64,
    pub recipe: Recipe,
    pub seed: u64,
    /// Image path relative to the manifest's directory.
    pub output: PathBuf,
}

/// PNG and PPM files directly inside `dir`, sorted by name.
pub fn list_sources(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, DatasetError> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_error(dir))? {
        let path = entry.map_err(io_error(dir))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "ppm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn source_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub levels: Vec<f64>,
    pub transforms_per_level: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            levels: BRIGHTNESS_LEVELS.to_vec(),
            transforms_per_level: DEFAULT_PER_LEVEL,
            seed: 0,
            threads: None,
        }
    }
}

/// Render every variant of `sources` into `out_dir` as PNG and write
/// `manifest.jsonl` there. Records come back in plan order.
pub fn build_variants(
    sources: &[PathBuf],
    out_dir: impl AsRef<Path>,
    cfg: &BuildConfig,
) -> Result<Vec<VariantRecord>, DatasetError> {
    let out_dir = out_dir.as_ref();
    if sources.is_empty() {
        return Err(DatasetError::NoSources);
    }
    let ids: Vec<String> = sources.iter().map(|p| source_id(p)).collect();
    let plans = plan_variants(&ids, &cfg.levels, cfg.transforms_per_level, cfg.seed)?;
    let images = sources
        .iter()
        .map(imagecore::load_image)
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir).map_err(io_error(out_dir))?;

    let work = || -> Result<Vec<VariantRecord>, DatasetError> {
        plans
            .par_iter()
            .map(|plan| {
                let img = render_variant(&images[plan.source_index], plan)?;
                let output = PathBuf::from(plan.file_name());
                imagecore::save_image(&img, out_dir.join(&output))?;
                Ok(VariantRecord {
                    source_id: plan.source_id.clone(),
                    brightness_level: plan.brightness_level,
                    recipe: plan.recipe.clone(),
                    seed: plan.seed,
                    output,
                })
            })
            .collect()
    };
    let records = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| DatasetError::ThreadPool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    write_jsonl(&records, out_dir.join(MANIFEST_NAME))?;
    Ok(records)
}

/// Write one JSON object per line.
pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, item).expect("records serialize");
        buf.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(io_error(path))
}

/// Read one JSON object per non-blank line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(
    path: impl AsRef<Path>,
) -> Result<Vec<T>, DatasetError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_error(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DatasetError::Format {
                path: format!("{}:{}", path.display(), n + 1),
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// A human (or automatic) judgement of one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    /// Image path of the judged variant.
    pub variant: PathBuf,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub scores: DimensionScores,
    pub total: f64,
    pub annotator: String,
}

impl AnnotationRecord {
    /// Build a record with its total computed from `scores`.
    pub fn new(
        variant: PathBuf,
        source_id: &str,
        prompt: Option<&str>,
        scores: DimensionScores,
        annotator: &str,
    ) -> Result<Self, DatasetError> {
        Ok(Self {
            total: metrics::total_score(&scores)?,
            variant,
            source_id: source_id.to_string(),
            prompt: prompt.map(str::to_string),
            scores,
            annotator: annotator.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let computed = metrics::total_score(&self.scores)?;
        if (computed - self.total).abs() > TOTAL_TOL {
            return Err(DatasetError::TotalMismatch {
                variant: self.variant.display().to_string(),
                stored: self.total,
                computed,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupBy {
    Prompt,
    Source,
}

/// Group annotations and order each group best-first by total. Groups keep
/// first-appearance order; equal totals keep record order.
pub fn export_ranking(
    records: &[AnnotationRecord],
    group_by: GroupBy,
) -> Result<Vec<RankingGroup>, DatasetError> {
    let mut keys: Vec<String> = Vec::new();
    let mut members: HashMap<String, Vec<&AnnotationRecord>> = HashMap::new();
    for r in records {
        r.validate()?;
        let key = match group_by {
            GroupBy::Prompt => r
                .prompt
                .clone()
                .ok_or_else(|| DatasetError::MissingPrompt {
                    variant: r.variant.display().to_string(),
                })?,
            GroupBy::Source => r.source_id.clone(),
        };
        members
            .entry(key.clone())
            .or_insert_with(|| {
                keys.push(key);
                Vec::new()
            })
            .push(r);
    }
    keys.into_iter()
        .map(|key| {
            let mut group = members.remove(&key).expect("key recorded");
            let k = group.len();
            if !(GROUP_SIZE_RANGE.0..=GROUP_SIZE_RANGE.1).contains(&k) {
                return Err(DatasetError::GroupSize { key, k });
            }
            group.sort_by(|a, b| b.total.total_cmp(&a.total));
            let prompt = match group_by {
                GroupBy::Prompt => key,
                GroupBy::Source => group[0].prompt.clone().unwrap_or(key),
            };
            Ok(RankingGroup {
                prompt,
                images: group.iter().map(|r| r.variant.clone()).collect(),
                scores: group.iter().map(|r| r.total).collect(),
            })
        })
        .collect()
}

/// Score every record's stored image with `model`. `base_dir` is the
/// manifest's directory.
pub fn auto_prescore(
    records: &[VariantRecord],
    base_dir: &Path,
    model: &RewardModel,
) -> Result<Vec<(VariantRecord, f64)>, DatasetError> {
    records
        .par_iter()
        .map(|r| {
            let img = imagecore::load_image(base_dir.join(&r.output))?;
            Ok((r.clone(), reward::score(model, &img)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("src{i:02}")).collect()
    }

    #[test]
    fn counts_follow_the_product() {
        let plans = plan_variants(&ids(10), &BRIGHTNESS_LEVELS, 8, 1).unwrap();
        assert_eq!(plans.len(), 320);
        assert_eq!(record_count(1000, 4, 8), 32_000);
    }

    #[test]
    fn recipes_are_short_distinct_and_quantized() {
        for plan in plan_variants(&ids(5), &BRIGHTNESS_LEVELS, 8, 9).unwrap() {
            let ops = plan.recipe.ops();
            assert!((1..=MAX_RECIPE_LEN).contains(&ops.len()));
            let mut names: Vec<_> = ops.iter().map(|o| o.name()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), ops.len());
            for op in ops {
                op.validate().unwrap();
                let text = op.to_string();
                assert_eq!(text.parse::<ColorOp>().unwrap(), *op);
            }
        }
    }

    #[test]
    fn planning_is_seed_determined() {
        let a = plan_variants(&ids(3), &BRIGHTNESS_LEVELS, 4, 77).unwrap();
        let b = plan_variants(&ids(3), &BRIGHTNESS_LEVELS, 4, 77).unwrap();
        let c = plan_variants(&ids(3), &BRIGHTNESS_LEVELS, 4, 78).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.iter().map(|p| &p.recipe).collect::<Vec<_>>(),
            c.iter().map(|p| &p.recipe).collect::<Vec<_>>()
        );
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            plan_variants(&[], &BRIGHTNESS_LEVELS, 8, 0),
            Err(DatasetError::NoSources)
        ));
        assert!(matches!(
            plan_variants(&ids(1), &BRIGHTNESS_LEVELS, 0, 0),
            Err(DatasetError::NoTransforms)
        ));
        assert!(matches!(
            plan_variants(&ids(1), &[f64::NAN], 1, 0),
            Err(DatasetError::BadLevel(_))
        ));
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            plan_variants(&dup, &BRIGHTNESS_LEVELS, 1, 0),
            Err(DatasetError::DuplicateSource(_))
        ));
    }

    fn annotation(name: &str, prompt: &str, scores: [f64; 5]) -> AnnotationRecord {
        AnnotationRecord::new(
            PathBuf::from(name),
            "s",
            Some(prompt),
            DimensionScores::new(scores),
            "a1",
        )
        .unwrap()
    }

    #[test]
    fn export_orders_best_first_and_keeps_ties_stable() {
        let recs = vec![
            annotation("a.png", "p", [2.0; 5]),
            annotation("b.png", "p", [4.0; 5]),
            annotation("c.png", "p", [3.0; 5]),
            annotation("d.png", "p", [4.0; 5]),
            annotation("e.png", "p", [1.0; 5]),
        ];
        let groups = export_ranking(&recs, GroupBy::Prompt).unwrap();
        assert_eq!(groups.len(), 1);
        let names: Vec<_> = groups[0]
            .images
            .iter()
            .map(|p| p.to_str().unwrap())
            .collect();
        assert_eq!(names, ["b.png", "d.png", "c.png", "a.png", "e.png"]);
        let idx: Vec<usize> = (0..5).collect();
        let pairs = reward::pairs_from_ranking("p", &idx, &groups[0].scores).unwrap();
        assert_eq!(pairs.len(), 10 - 1);
    }

    #[test]
    fn export_rejects_singletons_and_bad_totals() {
        let recs = vec![annotation("a.png", "p", [2.0; 5])];
        assert!(matches!(
            export_ranking(&recs, GroupBy::Prompt),
            Err(DatasetError::GroupSize { k: 1, .. })
        ));
        let mut bad = annotation("a.png", "p", [2.0; 5]);
        bad.total = 0.9;
        assert!(matches!(
            export_ranking(&[bad.clone(), bad], GroupBy::Source),
            Err(DatasetError::TotalMismatch { .. })
        ));
    }
}
