//! Small-scale diffusion math on plain vectors: noise schedules, the DDIM
//! update, the zero-projection control composition and the auxiliary loss.
//!
//! Samplers are checked against a closed-form optimal denoiser for Gaussian
//! data rather than a trained network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::imagecore::{ImageRgb, LUMA_WEIGHTS};
use crate::metrics::{self, SSIM_C1, SSIM_C2, SSIM_WINDOW};
use crate::reward::{self, RewardError, RewardModel};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("schedule needs at least one step")]
    NoSteps,
    #[error("beta range must satisfy 0 < beta_min <= beta_max < 1, got [{0}, {1}]")]
    BetaRange(f64, f64),
    #[error("cumulative alpha underflowed to zero at step {0}")]
    Underflow(usize),
    #[error("step {t} outside 1..={steps}")]
    StepRange { t: usize, steps: usize },
    #[error("eta must be finite and >= 0, got {0}")]
    BadEta(f64),
    #[error("length mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("reward weight is positive but no reward model was given")]
    MissingRewardModel,
    #[error("loss weights must be finite and >= 0")]
    BadWeights,
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

fn check_len(expected: usize, actual: usize) -> Result<(), DiffusionError> {
    if expected != actual {
        return Err(DiffusionError::Shape { expected, actual });
    }
    Ok(())
}

/// β_t for t = 1..T and their running products ᾱ_t.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alphas_cum: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self, DiffusionError> {
        if betas.is_empty() {
            return Err(DiffusionError::NoSteps);
        }
        if let Some(&b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(DiffusionError::BetaRange(b, b));
        }
        let mut acc = 1.0;
        let mut alphas_cum = Vec::with_capacity(betas.len());
        for (i, b) in betas.iter().enumerate() {
            acc *= 1.0 - b;
            if acc <= 0.0 {
                return Err(DiffusionError::Underflow(i + 1));
            }
            alphas_cum.push(acc);
        }
        Ok(Self { betas, alphas_cum })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// β_t, 1-based.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// ᾱ_t, 1-based, with ᾱ_0 = 1.
    pub fn alpha_cum(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alphas_cum[t - 1]
        }
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas_cum(&self) -> &[f64] {
        &self.alphas_cum
    }

    fn check_step(&self, t: usize) -> Result<(), DiffusionError> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::StepRange {
                t,
                steps: self.steps(),
            });
        }
        Ok(())
    }
}

/// β linearly spaced from `beta_min` to `beta_max` over `steps` steps.
/// A single step uses `beta_min`.
pub fn linear_schedule(
    steps: usize,
    beta_min: f64,
    beta_max: f64,
) -> Result<NoiseSchedule, DiffusionError> {
    if steps == 0 {
        return Err(DiffusionError::NoSteps);
    }
    if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
        return Err(DiffusionError::BetaRange(beta_min, beta_max));
    }
    let betas = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_min
            } else {
                beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    NoiseSchedule::from_betas(betas)
}

/// `(y_t - sqrt(1 - ᾱ_t) ε) / sqrt(ᾱ_t)`.
pub fn predict_x0(
    y_t: &[f64],
    t: usize,
    eps: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    sched.check_step(t)?;
    check_len(y_t.len(), eps.len())?;
    let a = sched.alpha_cum(t);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(y_t
        .iter()
        .zip(eps)
        .map(|(y, e)| (y - sn * e) / sa)
        .collect())
}

/// `sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) ε`.
pub fn forward_noise(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    sched: &NoiseSchedule,
) -> Result<Vec<f64>, DiffusionError> {
    sched.check_step(t)?;
    check_len(x0.len(), eps.len())?;
    let a = sched.alpha_cum(t);
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    Ok(x0.iter().zip(eps).map(|(x, e)| sa * x + sn * e).collect())
}

/// A noise predictor ε(y_t, t).
pub trait Denoiser: Sync {
    fn predict(&self, y_t: &[f64], t: usize) -> Vec<f64>;
}

impl<F> Denoiser for F
where
    F: Fn(&[f64], usize) -> Vec<f64> + Sync,
{
    fn predict(&self, y_t: &[f64], t: usize) -> Vec<f64> {
        self(y_t, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub y_prev: Vec<f64>,
    /// The direction coefficient `1 - ᾱ_{t-1} - σ²` was negative and set to 0.
    pub clamped: bool,
}

/// One DDIM update from step `t` to `t - 1` with `σ_t² = η β_t`.
pub fn ddim_step(
    y_t: &[f64],
    t: usize,
    denoiser: &impl Denoiser,
    sched: &NoiseSchedule,
    eta: f64,
    noise: &[f64],
) -> Result<StepOutput, DiffusionError> {
    sched.check_step(t)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(DiffusionError::BadEta(eta));
    }
    check_len(y_t.len(), noise.len())?;
    let eps = denoiser.predict(y_t, t);
    check_len(y_t.len(), eps.len())?;
    let x0 = predict_x0(y_t, t, &eps, sched)?;
    let a_prev = sched.alpha_cum(t - 1);
    let var = eta * sched.beta(t);
    let dir = 1.0 - a_prev - var;
    let clamped = dir < 0.0;
    let (c0, c1, c2) = (a_prev.sqrt(), dir.max(0.0).sqrt(), var.sqrt());
    let y_prev = x0
        .iter()
        .zip(&eps)
        .zip(noise)
        .map(|((x, e), z)| c0 * x + c1 * e + c2 * z)
        .collect();
    Ok(StepOutput { y_prev, clamped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutput {
    pub y0: Vec<f64>,
    pub clamp_events: usize,
}

/// Run `y_T` down to `y_0`. With `eta > 0`, step noise is standard normal
/// from `rng`; with `eta = 0`, `rng` is never touched.
pub fn sample(
    y_t: Vec<f64>,
    denoiser: &impl Denoiser,
    sched: &NoiseSchedule,
    eta: f64,
    rng: &mut impl Rng,
) -> Result<SampleOutput, DiffusionError> {
    let mut y = y_t;
    let mut clamp_events = 0;
    let mut noise = vec![0.0; y.len()];
    for t in (1..=sched.steps()).rev() {
        if eta > 0.0 {
            noise
                .iter_mut()
                .for_each(|z| *z = rng.sample(StandardNormal));
        }
        let out = ddim_step(&y, t, denoiser, sched, eta, &noise)?;
        clamp_events += usize::from(out.clamped);
        y = out.y_prev;
    }
    Ok(SampleOutput {
        y0: y,
        clamp_events,
    })
}

/// Optimal noise predictor for data `x0 ~ N(mean, var)` elementwise:
/// `sqrt(1-ᾱ)(y - sqrt(ᾱ) m) / (ᾱ v + 1 - ᾱ)`.
#[derive(Debug, Clone)]
pub struct GaussianOracleDenoiser {
    pub mean: f64,
    pub var: f64,
    alphas_cum: Vec<f64>,
}

impl GaussianOracleDenoiser {
    pub fn new(mean: f64, var: f64, sched: &NoiseSchedule) -> Self {
        Self {
            mean,
            var,
            alphas_cum: sched.alphas_cum().to_vec(),
        }
    }
}

impl Denoiser for GaussianOracleDenoiser {
    fn predict(&self, y_t: &[f64], t: usize) -> Vec<f64> {
        let a = self.alphas_cum[t - 1];
        let k = (1.0 - a).sqrt() / (a * self.var + 1.0 - a);
        let shift = a.sqrt() * self.mean;
        y_t.iter().map(|y| k * (y - shift)).collect()
    }
}

/// Sample mean and population variance.
pub fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v)
}

/// Draw `count` scalar trajectories from `y_T ~ N(0, 1)` through the oracle
/// denoiser. Trajectory `i` uses stream `i` of a ChaCha generator seeded with
/// `seed`, so results do not depend on thread scheduling.
pub fn sample_gaussian(
    denoiser: &GaussianOracleDenoiser,
    sched: &NoiseSchedule,
    eta: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, DiffusionError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let y_t = vec![rng.sample(StandardNormal)];
            Ok(sample(y_t, denoiser, sched, eta, &mut rng)?.y0[0])
        })
        .collect()
}

/// Dense layer `W v + b`, `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Affine {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            w: vec![0.0; inputs * outputs],
            b: vec![0.0; outputs],
        }
    }

    /// Entries uniform in `[-scale, scale]`.
    pub fn random(inputs: usize, outputs: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut draw =
            |n| -> Vec<f64> { (0..n).map(|_| rng.random_range(-scale..=scale)).collect() };
        Self {
            inputs,
            outputs,
            w: draw(inputs * outputs),
            b: draw(outputs),
        }
    }

    pub fn forward(&self, v: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        check_len(self.inputs, v.len())?;
        Ok((0..self.outputs)
            .map(|o| {
                let row = &self.w[o * self.inputs..(o + 1) * self.inputs];
                row.iter().zip(v).map(|(w, x)| w * x).sum::<f64>() + self.b[o]
            })
            .collect())
    }
}

/// `W2 tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    pub layer1: Affine,
    pub layer2: Affine,
}

impl TinyNet {
    pub fn random(dim: usize, hidden: usize, scale: f64, rng: &mut impl Rng) -> Self {
        Self {
            layer1: Affine::random(dim, hidden, scale, rng),
            layer2: Affine::random(hidden, dim, scale, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.layer1.inputs
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        let h: Vec<f64> = self.layer1.forward(x)?.iter().map(|v| v.tanh()).collect();
        self.layer2.forward(&h)
    }
}

/// Base network, a trainable copy fed the condition, and two projections
/// that start at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlledDenoiser {
    pub base: TinyNet,
    pub control: TinyNet,
    pub z1: Affine,
    pub z2: Affine,
}

impl ControlledDenoiser {
    /// Fresh control branch: `control` copies `base`, projections are zero.
    pub fn new(base: TinyNet, cond_dim: usize) -> Self {
        let d = base.dim();
        Self {
            control: base.clone(),
            z1: Affine::zeros(cond_dim, d),
            z2: Affine::zeros(d, d),
            base,
        }
    }
}

/// `F(x; Θ) + Z(F(x + Z(c; Θz1); Θc); Θz2)`.
pub fn controlnet_forward(
    x: &[f64],
    c: &[f64],
    m: &ControlledDenoiser,
) -> Result<Vec<f64>, DiffusionError> {
    let base = m.base.forward(x)?;
    let injected: Vec<f64> = x.iter().zip(m.z1.forward(c)?).map(|(a, b)| a + b).collect();
    let ctrl = m.z2.forward(&m.control.forward(&injected)?)?;
    Ok(base.iter().zip(ctrl).map(|(a, b)| a + b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuxWeights {
    pub col: f64,
    pub ssim: f64,
    pub reward: f64,
}

impl AuxWeights {
    fn validate(&self) -> Result<(), DiffusionError> {
        if [self.col, self.ssim, self.reward]
            .iter()
            .any(|w| !(*w >= 0.0 && w.is_finite()))
        {
            return Err(DiffusionError::BadWeights);
        }
        Ok(())
    }
}

/// The total and each unweighted term (zero when its weight is zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxLoss {
    pub total: f64,
    pub color: f64,
    pub ssim: f64,
    pub reward: f64,
}

/// `base + W_col·angular(pred, target) + W_ssim·(1 − SSIM) + W_reward·(−score)`.
pub fn aux_loss(
    pred: &ImageRgb,
    target: &ImageRgb,
    weights: &AuxWeights,
    base_loss: f64,
    reward_model: Option<&RewardModel>,
) -> Result<AuxLoss, DiffusionError> {
    weights.validate()?;
    let mut out = AuxLoss {
        total: base_loss,
        color: 0.0,
        ssim: 0.0,
        reward: 0.0,
    };
    if weights.col > 0.0 {
        out.color = metrics::angular_color_loss(pred, target)?;
        out.total += weights.col * out.color;
    }
    if weights.ssim > 0.0 {
        out.ssim = 1.0 - metrics::ssim(pred, target)?;
        out.total += weights.ssim * out.ssim;
    }
    if weights.reward > 0.0 {
        let model = reward_model.ok_or(DiffusionError::MissingRewardModel)?;
        out.reward = -reward::score(model, pred)?;
        out.total += weights.reward * out.reward;
    }
    Ok(out)
}

/// Gradient of the summed pixel angles with respect to `pred`'s channels.
fn angular_grad(pred: &ImageRgb, target: &ImageRgb) -> Vec<f64> {
    let mut g = vec![0.0; pred.data().len()];
    for (i, (a, b)) in pred.pixels().zip(target.pixels()).enumerate() {
        let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let u = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
        let s = (1.0 - u * u).sqrt();
        if u.abs() >= 1.0 || s == 0.0 {
            continue;
        }
        for c in 0..3 {
            let du = b[c] / (na * nb) - u * a[c] / (na * na);
            g[i * 3 + c] = -du / s;
        }
    }
    g
}

/// Gradient of `1 − SSIM(pred, target)` with respect to `pred`'s channels,
/// through the luma of each pixel.
fn ssim_loss_grad(pred: &ImageRgb, target: &ImageRgb) -> Vec<f64> {
    let (w, h) = pred.dims();
    let x = pred.to_luma();
    let y = target.to_luma();
    let k = SSIM_WINDOW;
    let n = (k * k) as f64;
    let windows = ((w - k + 1) * (h - k + 1)) as f64;
    let mut gl = vec![0.0; w * h];
    for oy in 0..=h - k {
        for ox in 0..=w - k {
            let idx: Vec<usize> = (oy..oy + k)
                .flat_map(|r| (ox..ox + k).map(move |c| r * w + c))
                .collect();
            let mx = idx.iter().map(|&i| x.data()[i]).sum::<f64>() / n;
            let my = idx.iter().map(|&i| y.data()[i]).sum::<f64>() / n;
            let vx = idx.iter().map(|&i| (x.data()[i] - mx).powi(2)).sum::<f64>() / n;
            let vy = idx.iter().map(|&i| (y.data()[i] - my).powi(2)).sum::<f64>() / n;
            let cov = idx
                .iter()
                .map(|&i| (x.data()[i] - mx) * (y.data()[i] - my))
                .sum::<f64>()
                / n;
            let a = 2.0 * mx * my + SSIM_C1;
            let b = 2.0 * cov + SSIM_C2;
            let c = mx * mx + my * my + SSIM_C1;
            let d = vx + vy + SSIM_C2;
            let s = a * b / (c * d);
            for &i in &idx {
                let dmx = 1.0 / n;
                let dvx = 2.0 * (x.data()[i] - mx) / n;
                let dcov = (y.data()[i] - my) / n;
                let ds = s * (2.0 * my * dmx / a + 2.0 * dcov / b - 2.0 * mx * dmx / c - dvx / d);
                gl[i] -= ds / windows;
            }
        }
    }
    gl.iter()
        .flat_map(|g| LUMA_WEIGHTS.map(|wc| g * wc))
        .collect()
}

/// Gradient of [`aux_loss`] with respect to `pred`'s channel values: exact
/// for the color and SSIM terms, central differences with step `h` for the
/// reward term. Interleaved like [`ImageRgb::data`].
pub fn aux_loss_grad(
    pred: &ImageRgb,
    target: &ImageRgb,
    weights: &AuxWeights,
    reward_model: Option<&RewardModel>,
    h: f64,
) -> Result<Vec<f64>, DiffusionError> {
    weights.validate()?;
    metrics::ssim(pred, target)?;
    let mut g = vec![0.0; pred.data().len()];
    if weights.col > 0.0 {
        for (gi, a) in g.iter_mut().zip(angular_grad(pred, target)) {
            *gi += weights.col * a;
        }
    }
    if weights.ssim > 0.0 {
        for (gi, s) in g.iter_mut().zip(ssim_loss_grad(pred, target)) {
            *gi += weights.ssim * s;
        }
    }
    if weights.reward > 0.0 {
        let model = reward_model.ok_or(DiffusionError::MissingRewardModel)?;
        let (w, ht) = pred.dims();
        for (i, gi) in g.iter_mut().enumerate() {
            let mut plus = pred.data().to_vec();
            let mut minus = plus.clone();
            plus[i] += h;
            minus[i] -= h;
            let fp = reward::score(model, &ImageRgb::from_vec_clamped(w, ht, plus)?)?;
            let fm = reward::score(model, &ImageRgb::from_vec_clamped(w, ht, minus)?)?;
            *gi += weights.reward * -(fp - fm) / (2.0 * h);
        }
    }
    Ok(g)
}

impl From<crate::imagecore::ImageError> for DiffusionError {
    fn from(e: crate::imagecore::ImageError) -> Self {
        DiffusionError::Metrics(e.into())
    }
}
