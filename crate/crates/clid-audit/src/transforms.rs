//! Data augmentation and adaptive text defenses.
//!
//! Augmentation perturbs data vectors the way image flips/crops perturb
//! images: one coordinate negated, a masked coordinate subset, additive
//! jitter. Defenses perturb the caption side (or the pairing) of a dataset
//! before training; the rephrase defense maps tokens into the reserved
//! synonym half of the vocabulary.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::condition::{TokenId, TokenSeq};
use crate::error::{Error, Result};
use crate::world::{synonym_base, ToyDataset};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub enabled: bool,
    pub flip_prob: f64,
    pub crop_mask_fraction: f64,
    pub jitter_stddev: f64,
}

impl AugmentationPolicy {
    pub fn disabled() -> Self {
        AugmentationPolicy {
            enabled: false,
            flip_prob: 0.0,
            crop_mask_fraction: 0.0,
            jitter_stddev: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::InvalidArgument("flip_prob must be in [0,1]".into()));
        }
        if !(0.0..1.0).contains(&self.crop_mask_fraction) {
            return Err(Error::InvalidArgument(
                "crop_mask_fraction must be in [0,1)".into(),
            ));
        }
        if self.jitter_stddev < 0.0 {
            return Err(Error::InvalidArgument("jitter_stddev must be >= 0".into()));
        }
        Ok(())
    }
}

/// Apply the flip/crop/jitter analogs to one data vector.
pub fn augment(x: &[f64], policy: &AugmentationPolicy, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let mut out = x.to_vec();
    if !policy.enabled || x.is_empty() {
        return out;
    }
    if policy.flip_prob > 0.0 && rng.gen::<f64>() < policy.flip_prob {
        let i = rng.gen_range(0..out.len());
        out[i] = -out[i];
    }
    if policy.crop_mask_fraction > 0.0 {
        let k = (policy.crop_mask_fraction * out.len() as f64).ceil() as usize;
        let masked = rand::seq::index::sample(rng, out.len(), k.min(out.len()));
        for i in masked {
            out[i] = 0.0;
        }
    }
    if policy.jitter_stddev > 0.0 {
        for v in out.iter_mut() {
            *v += policy.jitter_stddev * rng.sample::<f64, _>(StandardNormal);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseKind {
    None,
    Rephrase,
    Delete,
    Shuffle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefensePolicy {
    pub kind: DefenseKind,
    pub delete_fraction: f64,
    pub shuffle_fraction: f64,
    /// Injective map from content tokens into reserved synonym tokens.
    pub synonym_map: BTreeMap<TokenId, TokenId>,
}

impl DefensePolicy {
    pub fn none() -> Self {
        DefensePolicy {
            kind: DefenseKind::None,
            delete_fraction: 0.0,
            shuffle_fraction: 0.0,
            synonym_map: BTreeMap::new(),
        }
    }

    /// Rephrase policy mapping every content token `t` to `t + vocab/2`.
    pub fn rephrase_for_vocab(vocabulary_size: usize) -> Self {
        let base = synonym_base(vocabulary_size);
        let map: BTreeMap<TokenId, TokenId> = (1..base).map(|t| (t, t + base)).collect();
        DefensePolicy {
            kind: DefenseKind::Rephrase,
            delete_fraction: 0.0,
            shuffle_fraction: 0.0,
            synonym_map: map,
        }
    }

    pub fn delete(fraction: f64) -> Self {
        DefensePolicy {
            kind: DefenseKind::Delete,
            delete_fraction: fraction,
            shuffle_fraction: 0.0,
            synonym_map: BTreeMap::new(),
        }
    }

    pub fn shuffle(fraction: f64) -> Self {
        DefensePolicy {
            kind: DefenseKind::Shuffle,
            delete_fraction: 0.0,
            shuffle_fraction: fraction,
            synonym_map: BTreeMap::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delete_fraction) {
            return Err(Error::InvalidArgument("delete_fraction must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.shuffle_fraction) {
            return Err(Error::InvalidArgument("shuffle_fraction must be in [0,1]".into()));
        }
        // injective, and no key may also be a value (involution-free)
        let mut seen = std::collections::HashSet::new();
        for (&k, &v) in &self.synonym_map {
            if !seen.insert(v) {
                return Err(Error::InvalidArgument("synonym_map is not injective".into()));
            }
            if self.synonym_map.contains_key(&v) {
                return Err(Error::InvalidArgument(
                    "synonym_map maps into its own domain".into(),
                ));
            }
            let _ = k;
        }
        Ok(())
    }
}

/// Apply a caption-side defense to a dataset before training.
pub fn apply_defense(
    dataset: &ToyDataset,
    policy: &DefensePolicy,
    rng: &mut ChaCha12Rng,
) -> Result<ToyDataset> {
    policy.validate()?;
    let mut out = dataset.clone();
    match policy.kind {
        DefenseKind::None => {}
        DefenseKind::Rephrase => {
            for p in out.points.iter_mut() {
                let mapped: Vec<TokenId> = p
                    .c
                    .tokens()
                    .iter()
                    .map(|t| *policy.synonym_map.get(t).unwrap_or(t))
                    .collect();
                p.c = TokenSeq::new(mapped);
            }
        }
        DefenseKind::Delete => {
            for p in out.points.iter_mut() {
                let len = p.c.len();
                if len <= 1 {
                    continue;
                }
                // never delete every token
                let k = ((policy.delete_fraction * len as f64).ceil() as usize).min(len - 1);
                if k == 0 {
                    continue;
                }
                let mut drop: Vec<usize> =
                    rand::seq::index::sample(rng, len, k).into_iter().collect();
                drop.sort_unstable();
                let kept: Vec<TokenId> = p
                    .c
                    .tokens()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| drop.binary_search(i).is_err())
                    .map(|(_, t)| *t)
                    .collect();
                p.c = TokenSeq::new(kept);
            }
        }
        DefenseKind::Shuffle => {
            let n = out.points.len();
            let k = ((policy.shuffle_fraction * n as f64).ceil() as usize).min(n);
            if k >= 2 {
                let mut chosen: Vec<usize> =
                    rand::seq::index::sample(rng, n, k).into_iter().collect();
                chosen.sort_unstable();
                let mut conds: Vec<TokenSeq> =
                    chosen.iter().map(|&i| out.points[i].c.clone()).collect();
                conds.shuffle(rng);
                for (slot, cond) in chosen.into_iter().zip(conds) {
                    out.points[slot].c = cond;
                }
            }
        }
    }
    Ok(out)
}
