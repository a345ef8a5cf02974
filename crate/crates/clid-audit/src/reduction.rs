//! Reduced-condition sets: degraded versions of a caption used to
//! approximate the unconditional likelihood. Every set ends with the null
//! condition.
//!
//! Three strategies: clipping (first/middle/last thirds), embedding noise
//! (convex interpolation toward scaled Gaussian noise), and importance
//! masking (pad the highest-importance tokens, importance measured by the
//! leave-one-out loss increase).

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::condition::{Condition, ConditionEmbedder, TokenSeq, PAD_TOKEN};
use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::indicator::MonteCarloPlan;
use crate::schedule::{forward_diffuse, NoiseSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionStrategy {
    Clip,
    EmbedNoise,
    Importance,
}

/// The ordered set of reduced conditions; the last entry is always null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedConditionSet {
    pub entries: Vec<Condition>,
    pub strategy: ReductionStrategy,
}

impl ReducedConditionSet {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn validate(&self) -> Result<()> {
        match self.entries.last() {
            Some(last) if last.is_null() => Ok(()),
            _ => Err(Error::InvalidArgument(
                "reduced condition set must end with the null condition".into(),
            )),
        }
    }
}

/// Per-token importance scores aligned with a token sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceProfile {
    pub scores: Vec<f64>,
}

/// First/middle/last thirds by token index, then null.
///
/// Boundaries: first `[0, ceil(L/3))`, middle `[floor(L/3), ceil(2L/3))`,
/// last `[floor(2L/3), L)`.
pub fn reduce_clip(c: &TokenSeq) -> Result<ReducedConditionSet> {
    if c.is_empty() {
        return Err(Error::InvalidArgument("reduce_clip on empty condition".into()));
    }
    let len = c.len();
    let tokens = c.tokens();
    let third = len as f64 / 3.0;
    let slice = |lo: usize, hi: usize| Condition::tokens(tokens[lo..hi].to_vec());
    let entries = vec![
        slice(0, third.ceil() as usize),
        slice(third.floor() as usize, (2.0 * third).ceil() as usize),
        slice((2.0 * third).floor() as usize, len),
        Condition::tokens(vec![]),
    ];
    Ok(ReducedConditionSet { entries, strategy: ReductionStrategy::Clip })
}

/// Blend the caption embedding toward Gaussian noise at each scale, then null.
///
/// Per scale `s`, the entry is `(1 - s) * e + s * eta` where
/// `eta ~ N(0, I * var(e coordinates))`.
pub fn reduce_embed_noise(
    c: &TokenSeq,
    embedder: &ConditionEmbedder,
    scales: &[f64],
    rng: &mut ChaCha12Rng,
) -> Result<ReducedConditionSet> {
    if scales.is_empty() {
        return Err(Error::InvalidArgument("reduce_embed_noise needs scales".into()));
    }
    if scales.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidArgument("noise scales must be in [0,1]".into()));
    }
    let e = embedder.embed_tokens(c)?;
    let dim = e.len();
    let mean = e.iter().sum::<f64>() / dim as f64;
    let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
    let sd = var.sqrt();
    let mut entries = Vec::with_capacity(scales.len() + 1);
    for &s in scales {
        let blended: Vec<f64> = e
            .iter()
            .map(|&v| (1.0 - s) * v + s * sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        entries.push(Condition::Embedding(blended));
    }
    entries.push(Condition::tokens(vec![]));
    Ok(ReducedConditionSet { entries, strategy: ReductionStrategy::EmbedNoise })
}

/// Leave-one-out token importance: mean over the plan's draws of the loss
/// increase when token `j` is replaced by the pad token. Raw differences
/// are kept (no clamping).
pub fn token_importance<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
    x: &[f64],
    c: &TokenSeq,
    plan: &MonteCarloPlan,
) -> Result<ImportanceProfile> {
    if c.is_empty() {
        return Err(Error::InvalidArgument("token_importance on empty condition".into()));
    }
    plan.validate(schedule.total_steps)?;
    if x.len() != model.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "x has dim {}, model expects {}",
            x.len(),
            model.data_dim()
        )));
    }
    let draws = plan.generate_draws(plan.n_draws, x.len());
    let full_embed = embedder.embed_tokens(c)?;
    let mut padded_embeds = Vec::with_capacity(c.len());
    for j in 0..c.len() {
        let mut tokens = c.tokens().to_vec();
        tokens[j] = PAD_TOKEN;
        padded_embeds.push(embedder.embed_tokens(&TokenSeq::new(tokens))?);
    }
    let mut scores = vec![0.0; c.len()];
    let inv = 1.0 / draws.len() as f64;
    for (t, eps) in &draws {
        let x_t = forward_diffuse(x, *t, eps, schedule)?;
        let full_sq = squared_error(&model.predict(&x_t, *t, &full_embed), eps);
        for (j, pe) in padded_embeds.iter().enumerate() {
            let padded_sq = squared_error(&model.predict(&x_t, *t, pe), eps);
            scores[j] += (padded_sq - full_sq) * inv;
        }
    }
    Ok(ImportanceProfile { scores })
}

fn squared_error(pred: &[f64], eps: &[f64]) -> f64 {
    pred.iter().zip(eps).map(|(p, e)| (p - e) * (p - e)).sum()
}

/// Pad the highest-importance tokens at each proportion, then null.
///
/// Proportions must be ascending and in (0,1); `ceil(p * L)` tokens are
/// padded per entry, ties broken by the lower token index.
pub fn reduce_importance(
    c: &TokenSeq,
    profile: &ImportanceProfile,
    proportions: &[f64],
) -> Result<ReducedConditionSet> {
    if c.is_empty() {
        return Err(Error::InvalidArgument("reduce_importance on empty condition".into()));
    }
    if profile.scores.len() != c.len() {
        return Err(Error::DimensionMismatch(format!(
            "importance profile has {} scores for {} tokens",
            profile.scores.len(),
            c.len()
        )));
    }
    if proportions.is_empty()
        || proportions.iter().any(|p| !(*p > 0.0 && *p < 1.0))
        || proportions.windows(2).any(|w| w[0] > w[1])
    {
        return Err(Error::InvalidArgument(
            "proportions must be ascending values in (0,1)".into(),
        ));
    }
    if profile.scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("importance scores must be finite".into()));
    }
    let len = c.len();
    // descending importance, ties by lower index first
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| {
        profile.scores[b]
            .partial_cmp(&profile.scores[a])
            .expect("finite scores")
            .then(a.cmp(&b))
    });
    let mut entries = Vec::with_capacity(proportions.len() + 1);
    for &p in proportions {
        let count = ((p * len as f64).ceil() as usize).min(len);
        let mut tokens = c.tokens().to_vec();
        for &idx in order.iter().take(count) {
            tokens[idx] = PAD_TOKEN;
        }
        entries.push(Condition::tokens(tokens));
    }
    entries.push(Condition::tokens(vec![]));
    Ok(ReducedConditionSet { entries, strategy: ReductionStrategy::Importance })
}
