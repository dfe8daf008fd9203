//! Reward-guided greedy color polishing.
//!
//! Each round scores every candidate op applied to the current image, keeps
//! the best one if it beats the current score by more than `eps_accept`, and
//! stops otherwise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::ImageRgb;
use crate::reward::{ImageScorer, RewardError};
use crate::toolset::{self, ColorOp, ToolError};

pub const DEFAULT_MAX_ITERS: usize = 10;
pub const DEFAULT_EPS_ACCEPT: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("max_iters must be at least 1")]
    NoIterations,
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("eps_accept must be finite and >= 0, got {0}")]
    BadEpsilon(f64),
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// The default action vocabulary.
pub fn default_candidates() -> Vec<ColorOp> {
    use ColorOp::*;
    vec![
        Brightness(0.10),
        Brightness(-0.10),
        Brightness(0.20),
        Brightness(-0.20),
        Brightness(0.50),
        Saturation(0.10),
        Saturation(-0.10),
        Saturation(0.25),
        Contrast(0.10),
        Contrast(-0.10),
        ToneTint(10.0),
        ToneTint(-10.0),
        WhiteBalance(0.05),
        WhiteBalance(-0.05),
        Gamma(0.9),
        Gamma(1.1),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_iters: usize,
    pub eps_accept: f64,
    pub candidates: Vec<ColorOp>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            eps_accept: DEFAULT_EPS_ACCEPT,
            candidates: default_candidates(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), LoopError> {
        if self.max_iters == 0 {
            return Err(LoopError::NoIterations);
        }
        if self.candidates.is_empty() {
            return Err(LoopError::NoCandidates);
        }
        if !(self.eps_accept >= 0.0 && self.eps_accept.is_finite()) {
            return Err(LoopError::BadEpsilon(self.eps_accept));
        }
        for op in &self.candidates {
            op.validate()?;
        }
        Ok(())
    }
}

/// The best candidate of one round and whether it was kept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentStep {
    pub op: ColorOp,
    pub reward_before: f64,
    pub reward_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct PolishResult {
    pub image: ImageRgb,
    pub steps: Vec<AdjustmentStep>,
    pub initial_score: f64,
    pub final_score: f64,
    /// Whether the final score is positive. Informational only.
    pub reached_positive: bool,
}

impl PolishResult {
    pub fn accepted_ops(&self) -> Vec<ColorOp> {
        self.steps
            .iter()
            .filter(|s| s.accepted)
            .map(|s| s.op)
            .collect()
    }
}

struct Best {
    index: usize,
    image: ImageRgb,
    score: f64,
}

/// Score every candidate on `img`; ties go to the earliest candidate.
fn best_candidate(
    img: &ImageRgb,
    scorer: &impl ImageScorer,
    candidates: &[ColorOp],
) -> Result<Best, LoopError> {
    let evaluated: Vec<(ImageRgb, f64)> = candidates
        .par_iter()
        .map(|op| -> Result<_, LoopError> {
            let out = toolset::apply(op, img)?;
            let s = scorer.score(&out)?;
            Ok((out, s))
        })
        .collect::<Result<_, _>>()?;
    let mut index = 0;
    for (i, (_, s)) in evaluated.iter().enumerate().skip(1) {
        if *s > evaluated[index].1 {
            index = i;
        }
    }
    let (image, score) = evaluated.into_iter().nth(index).expect("non-empty");
    Ok(Best {
        index,
        image,
        score,
    })
}

/// Greedy best-first polishing of `img` under `scorer`.
pub fn autopolish(
    img: &ImageRgb,
    scorer: &impl ImageScorer,
    cfg: &LoopConfig,
) -> Result<PolishResult, LoopError> {
    cfg.validate()?;
    let initial_score = scorer.score(img)?;
    let mut current = img.clone();
    let mut current_score = initial_score;
    let mut steps = Vec::new();
    for _ in 0..cfg.max_iters {
        let best = best_candidate(&current, scorer, &cfg.candidates)?;
        let accepted = best.score > current_score + cfg.eps_accept;
        steps.push(AdjustmentStep {
            op: cfg.candidates[best.index],
            reward_before: current_score,
            reward_after: best.score,
            accepted,
        });
        if !accepted {
            break;
        }
        current = best.image;
        current_score = best.score;
    }
    Ok(PolishResult {
        image: current,
        steps,
        initial_score,
        final_score: current_score,
        reached_positive: current_score > 0.0,
    })
}

/// The single best improving op and its score delta, without applying it.
pub fn suggest(
    img: &ImageRgb,
    scorer: &impl ImageScorer,
    cfg: &LoopConfig,
) -> Result<Option<(ColorOp, f64)>, LoopError> {
    cfg.validate()?;
    let before = scorer.score(img)?;
    let best = best_candidate(img, scorer, &cfg.candidates)?;
    let delta = best.score - before;
    Ok((delta > cfg.eps_accept).then_some((cfg.candidates[best.index], delta)))
}

/// Classify each score after the first as accepted or rejected under the
/// loop's rule. A rejected score leaves the running best unchanged.
pub fn replay_accept_rule(scores: &[f64], eps_accept: f64) -> Vec<bool> {
    let Some((&first, rest)) = scores.split_first() else {
        return Vec::new();
    };
    let mut current = first;
    rest.iter()
        .map(|&s| {
            let ok = s > current + eps_accept;
            if ok {
                current = s;
            }
            ok
        })
        .collect()
}
