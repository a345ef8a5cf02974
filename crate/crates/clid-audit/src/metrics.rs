//! Attack evaluation metrics: ROC curves, AUC, ASR, and TPR at a fixed FPR.
//!
//! The ROC is built by sweeping unique score thresholds in descending
//! order with tied scores grouped, so equal scores flip together and
//! produce diagonal segments. AUC is accumulated in integer arithmetic
//! (trapezoid areas over counts) and equals the Mann-Whitney statistic
//! with ties counted one half, exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub point_id: usize,
    pub score: f64,
    pub member: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledScores {
    pub entries: Vec<ScoreEntry>,
}

impl LabeledScores {
    pub fn new(entries: Vec<ScoreEntry>) -> Self {
        LabeledScores { entries }
    }

    pub fn from_pairs(scores: &[f64], labels: &[bool]) -> Self {
        LabeledScores {
            entries: scores
                .iter()
                .zip(labels)
                .enumerate()
                .map(|(i, (&s, &m))| ScoreEntry { point_id: i, score: s, member: m })
                .collect(),
        }
    }

    pub fn counts(&self) -> (usize, usize) {
        let members = self.entries.iter().filter(|e| e.member).count();
        (members, self.entries.len() - members)
    }

    fn check(&self) -> Result<()> {
        if self.entries.iter().any(|e| !e.score.is_finite()) {
            return Err(Error::InvalidArgument("scores must be finite".into()));
        }
        let (m, h) = self.counts();
        if m == 0 || h == 0 {
            return Err(Error::InvalidArgument(
                "metric computation needs both labels present".into(),
            ));
        }
        Ok(())
    }
}

/// ROC curve from (0,0) to (1,1) with thresholds aligned to points.
///
/// `auc_numerator / auc_denominator` is the exact Mann-Whitney rational
/// `(2*wins + ties) / (2 * n_member * n_holdout)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ROCCurve {
    /// `(fpr, tpr)` pairs, non-decreasing in both coordinates.
    pub points: Vec<(f64, f64)>,
    /// Threshold per point; the initial (0,0) point carries +inf.
    pub thresholds: Vec<f64>,
    pub n_member: usize,
    pub n_holdout: usize,
    pub auc_numerator: u128,
    pub auc_denominator: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub attack_name: String,
    pub asr: f64,
    pub auc: f64,
    pub tpr_at_1pct_fpr: f64,
    pub n_member: usize,
    pub n_holdout: usize,
}

/// Build the ROC curve and AUC for labeled scores.
pub fn compute_roc_auc(scores: &LabeledScores) -> Result<(ROCCurve, f64)> {
    scores.check()?;
    let (n_member, n_holdout) = scores.counts();
    let mut sorted: Vec<(f64, bool)> =
        scores.entries.iter().map(|e| (e.score, e.member)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let mut tp: u128 = 0;
    let mut fp: u128 = 0;
    let mut area2: u128 = 0; // twice the area under the count-space curve
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        let mut group_tp: u128 = 0;
        let mut group_fp: u128 = 0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                group_tp += 1;
            } else {
                group_fp += 1;
            }
            i += 1;
        }
        area2 += group_fp * (2 * tp + group_tp);
        tp += group_tp;
        fp += group_fp;
        points.push((fp as f64 / n_holdout as f64, tp as f64 / n_member as f64));
        thresholds.push(score);
    }
    let denom = 2 * n_member as u128 * n_holdout as u128;
    let auc = area2 as f64 / denom as f64;
    Ok((
        ROCCurve {
            points,
            thresholds,
            n_member,
            n_holdout,
            auc_numerator: area2,
            auc_denominator: denom,
        },
        auc,
    ))
}

/// TPR at the largest achievable FPR not exceeding `target_fpr`, step
/// convention (no interpolation). Falls back to the FPR = 0 operating
/// point when nothing else qualifies.
pub fn tpr_at_fpr(roc: &ROCCurve, target_fpr: f64) -> f64 {
    let mut best = 0.0;
    for &(fpr, tpr) in &roc.points {
        if fpr <= target_fpr && tpr > best {
            best = tpr;
        }
    }
    best
}

/// Strict-threshold membership decision.
pub fn decide(score: f64, tau: f64) -> bool {
    score > tau
}

/// Attack success rate: fraction of points whose decision matches the label.
pub fn asr(scores: &LabeledScores, tau: f64) -> Result<f64> {
    scores.check()?;
    let correct = scores
        .entries
        .iter()
        .filter(|e| decide(e.score, tau) == e.member)
        .count();
    Ok(correct as f64 / scores.entries.len() as f64)
}
