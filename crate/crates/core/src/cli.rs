//! The `lumapolish` command line.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 parse, 4 compute.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::colorloop::{self, LoopConfig};
use crate::dataset::{self, BuildConfig, DatasetError};
use crate::diffusiontoy::{self, DiffusionError, GaussianOracleDenoiser};
use crate::imagecore::{self, ImageError};
use crate::metrics::{self, MetricsError};
use crate::promptparse::{self, AdjustmentPlan, PromptError};
use crate::relight::{self, EnhanceConfig, MaskOrigin, RelightError};
use crate::retinex::{self, RetinexError};
use crate::reward::{self, RankingDataset, RewardError, RewardModel, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_PARSE: i32 = 3;
pub const EXIT_COMPUTE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "lumapolish",
    version,
    about = "Prompt-driven low-light image enhancement"
)]
struct Cli {
    /// Seed for every random choice; identical invocations give identical output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print only primary results.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Apply a prompt such as "brighten the lamp a little" to an image.
    Enhance(EnhanceArgs),
    /// Split an image into illumination and reflectance.
    Decompose(DecomposeArgs),
    /// Greedily apply color ops while the reward model approves.
    Autopolish(AutopolishArgs),
    /// Render brightness-level and recipe variants of a folder of images.
    BuildDataset(BuildDatasetArgs),
    /// Fit a reward model to ranked image groups.
    TrainReward(TrainRewardArgs),
    /// Print the reward of one image.
    Score(ScoreArgs),
    /// Compare a test image against a reference (PSNR, SSIM, angular color).
    Eval(EvalArgs),
    /// Sample 1-D Gaussian data with DDIM and the exact denoiser.
    DdimDemo(DdimArgs),
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long)]
    image: Option<PathBuf>,
    #[arg(long)]
    prompt: String,
    /// Grayscale mask, 255 = edit. Overrides the prompt's target.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mask feathering in pixels.
    #[arg(long, default_value_t = relight::DEFAULT_FEATHER_SIGMA)]
    feather: f64,
    /// Resolve named regions to the darkest pixels when no mask is given.
    #[arg(long)]
    heuristic_mask: bool,
    /// Luma quantile for --heuristic-mask.
    #[arg(long, default_value_t = relight::DEFAULT_HEURISTIC_QUANTILE)]
    quantile: f64,
    #[arg(long, default_value_t = relight::DEFAULT_RETINEX_SIGMA)]
    retinex_sigma: f64,
    #[arg(long, default_value_t = relight::DEFAULT_SPATIAL_SIGMA)]
    spatial_sigma: f64,
    /// Write the JSON summary here as well as to stdout.
    #[arg(long)]
    summary_out: Option<PathBuf>,
    /// Save the brightness adjustment map as a grayscale heat map.
    #[arg(long)]
    adjust_map_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(long)]
    image: PathBuf,
    /// Where `<stem>_illum.png` and `<stem>_refl.png` go (default: next to the input).
    /// Reflectance is saved clamped to [0, 1].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = relight::DEFAULT_RETINEX_SIGMA)]
    sigma: f64,
}

#[derive(Debug, Args)]
struct AutopolishArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON list of {op, reward_before, reward_after, accepted}.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Apply this prompt first, then polish the result.
    #[arg(long)]
    prompt: Option<String>,
    /// Region mask for --prompt.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Resolve named regions in --prompt to the darkest pixels.
    #[arg(long)]
    heuristic_mask: bool,
    #[arg(long, default_value_t = colorloop::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    #[arg(long, default_value_t = colorloop::DEFAULT_EPS_ACCEPT)]
    eps: f64,
}

#[derive(Debug, Args)]
struct BuildDatasetArgs {
    #[arg(long)]
    sources_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Brightness multipliers.
    #[arg(long, value_delimiter = ',', default_values_t = dataset::BRIGHTNESS_LEVELS)]
    levels: Vec<f64>,
    /// Random recipes per brightness level.
    #[arg(long, default_value_t = dataset::DEFAULT_PER_LEVEL)]
    per_level: usize,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainRewardArgs {
    /// JSON-lines of {prompt, images, scores}; image paths relative to this file.
    #[arg(long)]
    rankings: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = reward::DEFAULT_LR)]
    lr: f64,
    #[arg(long, default_value_t = reward::DEFAULT_BATCH)]
    batch: usize,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
}

#[derive(Debug, Args)]
struct DdimArgs {
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 10_000)]
    trajectories: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_min: f64,
    #[arg(long, default_value_t = 0.02)]
    beta_max: f64,
    /// Write the (trajectory, y0) CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code and an optional second diagnostic line.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

fn image_code(e: &ImageError) -> i32 {
    match e {
        ImageError::Io { .. }
        | ImageError::Decode { .. }
        | ImageError::UnsupportedFormat(_)
        | ImageError::ZeroDimension { .. } => EXIT_IO,
        _ => EXIT_COMPUTE,
    }
}

fn reward_code(e: &RewardError) -> i32 {
    match e {
        RewardError::Io { .. } => EXIT_IO,
        RewardError::Format { .. } | RewardError::Version(_) => EXIT_PARSE,
        RewardError::Image(e) => image_code(e),
        _ => EXIT_COMPUTE,
    }
}

macro_rules! failure_from {
    ($t:ty, $code:expr) => {
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                #[allow(clippy::redundant_closure_call)]
                let code = ($code)(&e);
                Failure {
                    code,
                    message: e.to_string(),
                }
            }
        }
    };
}

failure_from!(ImageError, image_code);
failure_from!(RewardError, reward_code);
failure_from!(MetricsError, |e: &MetricsError| match e {
    MetricsError::Image(i) => image_code(i),
    _ => EXIT_COMPUTE,
});
failure_from!(RetinexError, |e: &RetinexError| match e {
    RetinexError::Image(i) => image_code(i),
    _ => EXIT_COMPUTE,
});
failure_from!(RelightError, |e: &RelightError| match e {
    RelightError::Image(i) => image_code(i),
    RelightError::Prompt(_) => EXIT_PARSE,
    _ => EXIT_COMPUTE,
});
failure_from!(DatasetError, |e: &DatasetError| match e {
    DatasetError::Io { .. } => EXIT_IO,
    DatasetError::Format { .. } => EXIT_PARSE,
    DatasetError::Image(i) => image_code(i),
    DatasetError::Reward(r) => reward_code(r),
    _ => EXIT_COMPUTE,
});
failure_from!(DiffusionError, |_: &DiffusionError| EXIT_COMPUTE);
failure_from!(colorloop::LoopError, |e: &colorloop::LoopError| match e {
    colorloop::LoopError::Reward(r) => reward_code(r),
    _ => EXIT_COMPUTE,
});

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Error text plus the prompt with the offending bytes underlined.
fn prompt_diagnostic(prompt: &str, e: &PromptError) -> String {
    let mut msg = format!("invalid prompt: {e}");
    if let Some(span) = e.span() {
        let start = prompt[..span.start.min(prompt.len())].chars().count();
        let width = prompt
            .get(span.clone())
            .map(|s| s.chars().count())
            .unwrap_or(1)
            .max(1);
        msg.push_str(&format!(
            "\n  {prompt}\n  {}{}",
            " ".repeat(start),
            "^".repeat(width)
        ));
    }
    msg
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

struct Ctx<'a> {
    quiet: bool,
    seed: u64,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Ctx<'_> {
    fn info(&mut self, line: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "{line}");
        }
    }
}

/// Parse `args` (including the program name) and run. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let mut ctx = Ctx {
        quiet: cli.quiet,
        seed: cli.seed,
        out,
        err,
    };
    let result = match cli.command {
        Command::Enhance(a) => enhance(a, &mut ctx),
        Command::Decompose(a) => decompose(a, &mut ctx),
        Command::Autopolish(a) => autopolish(a, &mut ctx),
        Command::BuildDataset(a) => build_dataset(a, &mut ctx),
        Command::TrainReward(a) => train_reward(a, &mut ctx),
        Command::Score(a) => score(a, &mut ctx),
        Command::Eval(a) => eval(a, &mut ctx),
        Command::DdimDemo(a) => ddim_demo(a, &mut ctx),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(ctx.err, "error: {}", f.message);
            f.code
        }
    }
}

/// Run with the process arguments and standard streams.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn parse_prompt(prompt: &str) -> Result<AdjustmentPlan, Failure> {
    promptparse::parse(prompt).map_err(|e| Failure {
        code: EXIT_PARSE,
        message: prompt_diagnostic(prompt, &e),
    })
}

fn mask_origin(mask: Option<&Path>, heuristic: bool, quantile: f64) -> MaskOrigin<'_> {
    match (mask, heuristic) {
        (Some(p), _) => MaskOrigin::File(p),
        (None, true) => MaskOrigin::Heuristic(quantile),
        (None, false) => MaskOrigin::None,
    }
}

fn enhance(a: EnhanceArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    let plan = parse_prompt(&a.prompt)?;
    let image_path = a
        .image
        .ok_or_else(|| Failure::usage("--image is required"))?;
    let out_path = a.out.ok_or_else(|| Failure::usage("--out is required"))?;
    let img = imagecore::load_image(&image_path)?;
    let origin = mask_origin(a.mask.as_deref(), a.heuristic_mask, a.quantile);
    let cfg = EnhanceConfig {
        retinex_sigma: a.retinex_sigma,
        spatial_sigma: a.spatial_sigma,
        feather_sigma: a.feather,
    };
    let result = relight::enhance_plan(&img, &plan, origin, &cfg)?;
    imagecore::save_image(&result.image, &out_path)?;
    if let Some(p) = &a.summary_out {
        write_json(p, &result.summary)?;
    }
    if let Some(p) = &a.adjust_map_out {
        match &result.adjustment {
            Some(adj) => imagecore::save_gray(&adj.to_heatmap(), p)?,
            None => ctx.info("no brightness change requested; adjustment map not written"),
        }
    }
    if !ctx.quiet {
        let text = serde_json::to_string_pretty(&result.summary).expect("serializable");
        let _ = writeln!(ctx.out, "{text}");
    }
    Ok(())
}

fn decompose(a: DecomposeArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    let img = imagecore::load_image(&a.image)?;
    let pair = retinex::decompose(&img, a.sigma)?;
    let stem = a
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    let dir = match &a.out_dir {
        Some(d) => d.clone(),
        None => a.image.parent().unwrap_or(Path::new(".")).to_path_buf(),
    };
    let illum_path = dir.join(format!("{stem}_illum.png"));
    let refl_path = dir.join(format!("{stem}_refl.png"));
    imagecore::save_gray(pair.illumination(), &illum_path)?;
    imagecore::save_image(&pair.reflection().to_image_clamped(), &refl_path)?;
    let _ = writeln!(ctx.out, "{}\n{}", illum_path.display(), refl_path.display());
    ctx.info(&format!(
        "illumination mean {:.4}, range [{:.4}, {:.4}]",
        pair.illumination().mean(),
        pair.illumination().min(),
        pair.illumination().max()
    ));
    Ok(())
}

fn autopolish(a: AutopolishArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    let plan = a.prompt.as_deref().map(parse_prompt).transpose()?;
    let model = RewardModel::load(&a.model)?;
    let mut img = imagecore::load_image(&a.image)?;
    if let Some(plan) = &plan {
        let origin = mask_origin(
            a.mask.as_deref(),
            a.heuristic_mask,
            relight::DEFAULT_HEURISTIC_QUANTILE,
        );
        img = relight::enhance_plan(&img, plan, origin, &EnhanceConfig::default())?.image;
    }
    let cfg = LoopConfig {
        max_iters: a.max_iters,
        eps_accept: a.eps,
        ..Default::default()
    };
    let result = colorloop::autopolish(&img, &model, &cfg)?;
    imagecore::save_image(&result.image, &a.out)?;
    if let Some(p) = &a.trace_out {
        write_json(p, &result.steps)?;
    }
    for s in &result.steps {
        ctx.info(&format!(
            "{:<22} {:+.4} -> {:+.4} {}",
            s.op.to_string(),
            s.reward_before,
            s.reward_after,
            if s.accepted { "accept" } else { "reject" }
        ));
    }
    let _ = writeln!(ctx.out, "{}", result.final_score);
    Ok(())
}

fn build_dataset(a: BuildDatasetArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    if !a.sources_dir.is_dir() {
        return Err(Failure {
            code: EXIT_IO,
            message: format!("{} is not a directory", a.sources_dir.display()),
        });
    }
    let sources = dataset::list_sources(&a.sources_dir)?;
    let cfg = BuildConfig {
        levels: a.levels,
        transforms_per_level: a.per_level,
        seed: ctx.seed,
        threads: a.threads,
    };
    let records = dataset::build_variants(&sources, &a.out_dir, &cfg)?;
    ctx.info(&format!(
        "wrote {} variants and {}",
        records.len(),
        a.out_dir.join(dataset::MANIFEST_NAME).display()
    ));
    Ok(())
}

fn train_reward(a: TrainRewardArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    let groups = reward::read_ranking_file(&a.rankings)?;
    let base = a.rankings.parent().unwrap_or(Path::new("."));
    let ds = RankingDataset::from_groups(&groups, base)?;
    let cfg = TrainConfig {
        lr: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        seed: ctx.seed,
    };
    let report = reward::train(&ds, &cfg)?;
    report.model.save(&a.out)?;
    let acc = reward::pairwise_accuracy(&report.model, &ds.pairs, &ds.features)?;
    ctx.info(&format!(
        "{} pairs, loss {:.6} -> {:.6}, training accuracy {:.4}",
        ds.pairs.len(),
        report.losses[0],
        report.final_loss(),
        acc
    ));
    Ok(())
}

fn score(a: ScoreArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    let model = RewardModel::load(&a.model)?;
    let img = imagecore::load_image(&a.image)?;
    let s = reward::score(&model, &img)?;
    let _ = writeln!(ctx.out, "{s}");
    Ok(())
}

fn eval(a: EvalArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    let reference = imagecore::load_image(&a.reference)?;
    let test = imagecore::load_image(&a.test)?;
    let report = metrics::evaluate(&reference, &test)?;
    let _ = writeln!(
        ctx.out,
        "{}",
        serde_json::to_string(&report).expect("serializable")
    );
    Ok(())
}

#[derive(Serialize)]
struct DdimSummary {
    steps: usize,
    eta: f64,
    trajectories: usize,
    mean: f64,
    variance: f64,
    clamp_free: bool,
}

fn ddim_demo(a: DdimArgs, ctx: &mut Ctx) -> Result<(), Failure> {
    if a.trajectories == 0 {
        return Err(Failure::usage("--trajectories must be at least 1"));
    }
    let sched = diffusiontoy::linear_schedule(a.steps, a.beta_min, a.beta_max)?;
    let denoiser = GaussianOracleDenoiser::new(0.0, 1.0, &sched);
    let ys = diffusiontoy::sample_gaussian(&denoiser, &sched, a.eta, a.trajectories, ctx.seed)?;
    let (mean, variance) = diffusiontoy::moments(&ys);
    let mut csv = String::from("trajectory,y0\n");
    for (i, y) in ys.iter().enumerate() {
        csv.push_str(&format!("{i},{y}\n"));
    }
    let summary = DdimSummary {
        steps: a.steps,
        eta: a.eta,
        trajectories: a.trajectories,
        mean,
        variance,
        clamp_free: (1..=a.steps)
            .all(|t| 1.0 - sched.alpha_cum(t - 1) - a.eta * sched.beta(t) >= 0.0),
    };
    let summary = serde_json::to_string(&summary).expect("serializable");
    match &a.out {
        Some(p) => {
            fs::write(p, csv).map_err(|e| io_failure(p, e))?;
            let _ = writeln!(ctx.out, "{summary}");
        }
        None => {
            let _ = write!(ctx.out, "{csv}");
            ctx.info(&summary);
        }
    }
    Ok(())
}
