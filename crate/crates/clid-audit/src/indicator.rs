//! Monte Carlo estimation of the conditional likelihood discrepancies and
//! the ELBO proxy, with shared-noise pairing and query reuse.
//!
//! A plan fixes the scoring window, the draw counts, and the noise stream.
//! Draw `i` uses timestep `timesteps[i % len]` with fresh noise, so the
//! default window of three calibrated steps with one draw each gives
//! `M = N = 3`. With pairing enabled, both terms of a discrepancy see the
//! same `(t, eps)` pair and the conditional-term evaluations are reused
//! across all discrepancies and the proxy: `M + K * N` model queries per
//! point, counted and checked.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::condition::{null_condition, Condition, ConditionEmbedder};
use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::metrics::{compute_roc_auc, LabeledScores, ScoreEntry};
use crate::reduction::ReducedConditionSet;
use crate::rng::{derive_indexed_seed, derive_seed, rng_from_seed};
use crate::schedule::{forward_diffuse, NoiseSchedule};

/// Counts noise-predictor invocations during scoring.
#[derive(Debug, Default)]
pub struct QueryMeter(AtomicU64);

impl QueryMeter {
    pub fn new() -> Self {
        QueryMeter(AtomicU64::new(0))
    }

    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloPlan {
    /// Scoring window; 1-based timesteps, cycled across draws.
    pub timesteps: Vec<usize>,
    pub draws_per_timestep: usize,
    /// Draw count for the ELBO proxy (M).
    pub m_draws: usize,
    /// Draw count per discrepancy (N).
    pub n_draws: usize,
    pub noise_seed: u64,
    /// Pair the conditional and reduced terms on the same `(t, eps)` draws.
    pub share_noise_across_conditions: bool,
}

impl MonteCarloPlan {
    /// Standard plan: `M = N = timesteps.len() * draws_per_timestep`,
    /// shared noise.
    pub fn new(timesteps: Vec<usize>, draws_per_timestep: usize, noise_seed: u64) -> Self {
        let n = timesteps.len() * draws_per_timestep;
        MonteCarloPlan {
            timesteps,
            draws_per_timestep,
            m_draws: n,
            n_draws: n,
            noise_seed,
            share_noise_across_conditions: true,
        }
    }

    /// Same plan with a per-point noise seed.
    pub fn for_point(&self, point_index: u64) -> Self {
        let mut plan = self.clone();
        plan.noise_seed = derive_indexed_seed(self.noise_seed, point_index);
        plan
    }

    pub fn validate(&self, total_steps: usize) -> Result<()> {
        if self.timesteps.is_empty() || self.draws_per_timestep == 0 {
            return Err(Error::InvalidArgument(
                "plan needs at least one timestep and one draw".into(),
            ));
        }
        if let Some(&t) = self.timesteps.iter().find(|&&t| t < 1 || t > total_steps) {
            return Err(Error::InvalidArgument(format!(
                "plan timestep {t} outside [1, {total_steps}]"
            )));
        }
        if self.m_draws == 0 || self.n_draws == 0 {
            return Err(Error::InvalidArgument("plan draw counts must be positive".into()));
        }
        Ok(())
    }

    /// Deterministic draw stream: `(t_i, eps_i)` with cycled timesteps.
    pub fn generate_draws(&self, count: usize, data_dim: usize) -> Vec<(usize, Vec<f64>)> {
        let mut rng = rng_from_seed(self.noise_seed);
        (0..count)
            .map(|i| {
                let t = self.timesteps[i % self.timesteps.len()];
                let eps: Vec<f64> =
                    (0..data_dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                (t, eps)
            })
            .collect()
    }

    /// Independent draw stream for unpaired estimation of term `index`.
    fn generate_independent_draws(
        &self,
        index: usize,
        count: usize,
        data_dim: usize,
    ) -> Vec<(usize, Vec<f64>)> {
        let mut alt = self.clone();
        alt.noise_seed = derive_seed(self.noise_seed, &format!("independent-{index}"));
        alt.generate_draws(count, data_dim)
    }
}

/// Per-point estimates: discrepancies for each reduced condition, the ELBO
/// proxy, and the per-draw audit trail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndicatorEstimate {
    pub discrepancies: Vec<f64>,
    pub elbo_proxy: f64,
    pub draw_records: Vec<DrawRecord>,
    pub query_count: u64,
}

impl IndicatorEstimate {
    pub fn mean_discrepancy(&self) -> f64 {
        self.discrepancies.iter().sum::<f64>() / self.discrepancies.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawRecord {
    pub t: usize,
    pub conditional_sq_err: f64,
    pub reduced_sq_err: Vec<f64>,
}

/// Ordered features `(D_1, ..., D_k, L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn squared_error(pred: &[f64], eps: &[f64]) -> f64 {
    pred.iter().zip(eps).map(|(p, e)| (p - e) * (p - e)).sum()
}

fn check_dims<P: NoisePredictor + ?Sized>(model: &P, x: &[f64]) -> Result<()> {
    if x.len() != model.data_dim() {
        return Err(Error::DimensionMismatch(format!(
            "x has dim {}, model expects {}",
            x.len(),
            model.data_dim()
        )));
    }
    Ok(())
}

/// Squared errors of the model under one condition over explicit draws.
fn conditional_sq_errs<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    x: &[f64],
    c_embed: &[f64],
    draws: &[(usize, Vec<f64>)],
    meter: &QueryMeter,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(draws.len());
    for (t, eps) in draws {
        let x_t = forward_diffuse(x, *t, eps, schedule)?;
        let pred = model.predict(&x_t, *t, c_embed);
        meter.bump();
        out.push(squared_error(&pred, eps));
    }
    Ok(out)
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Paired-difference mean used by both the standalone estimator and
/// `score_point`, so reuse is bitwise-identical by construction.
fn paired_difference_mean(reduced_sq: &[f64], conditional_sq: &[f64]) -> f64 {
    let diffs: f64 = reduced_sq
        .iter()
        .zip(conditional_sq)
        .map(|(r, c)| r - c)
        .sum();
    diffs / reduced_sq.len() as f64
}

/// Monte Carlo estimate of one discrepancy `D_{x,c,c*}`.
///
/// With shared noise each draw evaluates both terms on the same `(t, eps)`
/// pair; `c_star == c` therefore gives exactly zero.
pub fn estimate_discrepancy<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
    x: &[f64],
    c: &Condition,
    c_star: &Condition,
    plan: &MonteCarloPlan,
    meter: &QueryMeter,
) -> Result<f64> {
    plan.validate(schedule.total_steps)?;
    check_dims(model, x)?;
    let c_embed = embedder.embed(c)?;
    let star_embed = embedder.embed(c_star)?;
    if plan.share_noise_across_conditions {
        let draws = plan.generate_draws(plan.n_draws, x.len());
        let cond = conditional_sq_errs(model, schedule, x, &c_embed, &draws, meter)?;
        let reduced = conditional_sq_errs(model, schedule, x, &star_embed, &draws, meter)?;
        Ok(paired_difference_mean(&reduced, &cond))
    } else {
        let cond_draws = plan.generate_draws(plan.m_draws, x.len());
        let red_draws = plan.generate_independent_draws(0, plan.n_draws, x.len());
        let cond = conditional_sq_errs(model, schedule, x, &c_embed, &cond_draws, meter)?;
        let reduced = conditional_sq_errs(model, schedule, x, &star_embed, &red_draws, meter)?;
        Ok(mean(&reduced) - mean(&cond))
    }
}

/// Negated mean conditional squared error over the plan's M draws.
pub fn estimate_elbo_proxy<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
    x: &[f64],
    c: &Condition,
    plan: &MonteCarloPlan,
    meter: &QueryMeter,
) -> Result<f64> {
    plan.validate(schedule.total_steps)?;
    check_dims(model, x)?;
    let c_embed = embedder.embed(c)?;
    let draws = plan.generate_draws(plan.m_draws, x.len());
    let cond = conditional_sq_errs(model, schedule, x, &c_embed, &draws, meter)?;
    Ok(-mean(&cond))
}

/// Score one point: all `k` discrepancies plus the proxy with exactly
/// `M + K * N` model queries. The conditional-term evaluations are shared
/// across every discrepancy and reused for the proxy.
pub fn score_point<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
    x: &[f64],
    c: &Condition,
    reduction: &ReducedConditionSet,
    plan: &MonteCarloPlan,
    meter: &QueryMeter,
) -> Result<IndicatorEstimate> {
    plan.validate(schedule.total_steps)?;
    check_dims(model, x)?;
    reduction.validate()?;
    if plan.share_noise_across_conditions && plan.m_draws != plan.n_draws {
        return Err(Error::InvalidArgument(
            "query reuse requires M = N in the Monte Carlo plan".into(),
        ));
    }
    let k = reduction.k();
    let start = meter.count();
    let c_embed = embedder.embed(c)?;

    let draws = plan.generate_draws(plan.n_draws, x.len());
    let cond = conditional_sq_errs(model, schedule, x, &c_embed, &draws, meter)?;

    let mut reduced_per_entry = Vec::with_capacity(k);
    for entry in &reduction.entries {
        let star_embed = embedder.embed(entry)?;
        if plan.share_noise_across_conditions {
            reduced_per_entry.push(conditional_sq_errs(
                model, schedule, x, &star_embed, &draws, meter,
            )?);
        } else {
            let red_draws = plan.generate_independent_draws(0, plan.n_draws, x.len());
            reduced_per_entry.push(conditional_sq_errs(
                model, schedule, x, &star_embed, &red_draws, meter,
            )?);
        }
    }

    let discrepancies: Vec<f64> = if plan.share_noise_across_conditions {
        reduced_per_entry
            .iter()
            .map(|red| paired_difference_mean(red, &cond))
            .collect()
    } else {
        let cond_mean = mean(&cond);
        reduced_per_entry.iter().map(|red| mean(red) - cond_mean).collect()
    };
    let elbo_proxy = -mean(&cond);

    let draw_records: Vec<DrawRecord> = draws
        .iter()
        .enumerate()
        .map(|(i, (t, _))| DrawRecord {
            t: *t,
            conditional_sq_err: cond[i],
            reduced_sq_err: reduced_per_entry.iter().map(|red| red[i]).collect(),
        })
        .collect();

    let observed = meter.count() - start;
    let expected = (plan.m_draws + k * plan.n_draws) as u64;
    if observed != expected {
        return Err(Error::QueryAccounting { expected, observed });
    }
    Ok(IndicatorEstimate {
        discrepancies,
        elbo_proxy,
        draw_records,
        query_count: observed,
    })
}

/// Assemble the ordered feature vector `(D_1, ..., D_k, L)`.
pub fn build_feature_vector(estimate: &IndicatorEstimate) -> FeatureVector {
    let mut v = estimate.discrepancies.clone();
    v.push(estimate.elbo_proxy);
    FeatureVector(v)
}

/// Pick the scoring window: evaluate the single-draw null-condition
/// discrepancy AUC per candidate timestep on labeled probe points and
/// return `window_width` consecutive candidates centered at the argmax
/// (ties: lowest timestep). If no candidate separates the labels
/// (best AUC below 0.55), the window defaults to mid-schedule.
pub fn calibrate_timestep_window<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
    probe_points: &[(Vec<f64>, Condition, bool)],
    candidate_timesteps: &[usize],
    window_width: usize,
    noise_seed: u64,
) -> Result<Vec<usize>> {
    if candidate_timesteps.is_empty() {
        return Err(Error::InvalidArgument("no candidate timesteps".into()));
    }
    if window_width == 0 {
        return Err(Error::InvalidArgument("window_width must be positive".into()));
    }
    let labels: Vec<bool> = probe_points.iter().map(|(_, _, l)| *l).collect();
    if !labels.contains(&true) || !labels.contains(&false) {
        return Err(Error::InvalidArgument(
            "calibration probe needs both labels".into(),
        ));
    }
    let null = null_condition();
    let meter = QueryMeter::new();
    let mut best_idx = candidate_timesteps.len() / 2;
    let mut best_auc = f64::NEG_INFINITY;
    for (ci, &t) in candidate_timesteps.iter().enumerate() {
        let mut entries = Vec::with_capacity(probe_points.len());
        for (pi, (x, c, label)) in probe_points.iter().enumerate() {
            let plan = MonteCarloPlan::new(
                vec![t],
                1,
                derive_indexed_seed(derive_seed(noise_seed, "calibrate"), (ci * probe_points.len() + pi) as u64),
            );
            let d = estimate_discrepancy(model, schedule, embedder, x, c, &null, &plan, &meter)?;
            entries.push(ScoreEntry { point_id: pi, score: d, member: *label });
        }
        let (_, auc) = compute_roc_auc(&LabeledScores::new(entries))?;
        if auc > best_auc {
            best_auc = auc;
            best_idx = ci;
        }
    }
    if best_auc < 0.55 {
        // no informative timestep; fall back to mid-schedule
        best_idx = candidate_timesteps.len() / 2;
    }
    let w = window_width.min(candidate_timesteps.len());
    let half = w / 2;
    let mut start = best_idx.saturating_sub(half);
    if start + w > candidate_timesteps.len() {
        start = candidate_timesteps.len() - w;
    }
    Ok(candidate_timesteps[start..start + w].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::condition::TokenSeq;
    use crate::reduction::ReductionStrategy;
    use crate::schedule::{make_linear_schedule, SigmaMode};

    /// Predicts zero regardless of inputs.
    struct ZeroModel {
        dim: usize,
    }

    impl NoisePredictor for ZeroModel {
        fn data_dim(&self) -> usize {
            self.dim
        }
        fn predict(&self, _x: &[f64], _t: usize, _c: &[f64]) -> Vec<f64> {
            vec![0.0; self.dim]
        }
    }

    /// Recovers the true noise from `x_t` when the condition is non-null
    /// (only valid for `x0 = 0`), outputs zero under the null condition.
    struct OracleModel<'a> {
        schedule: &'a NoiseSchedule,
        dim: usize,
    }

    impl NoisePredictor for OracleModel<'_> {
        fn data_dim(&self) -> usize {
            self.dim
        }
        fn predict(&self, x_t: &[f64], t: usize, c: &[f64]) -> Vec<f64> {
            if c.iter().all(|&v| v == 0.0) {
                vec![0.0; self.dim]
            } else {
                let scale = 1.0 / (1.0 - self.schedule.alpha_bar(t)).sqrt();
                x_t.iter().map(|&v| v * scale).collect()
            }
        }
    }

    fn fixture() -> (NoiseSchedule, ConditionEmbedder) {
        (
            make_linear_schedule(50, 1e-3, 0.2, SigmaMode::Beta).unwrap(),
            ConditionEmbedder::random(16, 4, 3).unwrap(),
        )
    }

    fn cond(tokens: &[u32]) -> Condition {
        Condition::Tokens(TokenSeq::new(tokens.to_vec()))
    }

    #[test]
    fn condition_blind_model_gives_exact_zero() {
        let (schedule, embedder) = fixture();
        let model = ZeroModel { dim: 4 };
        let plan = MonteCarloPlan::new(vec![10, 20, 30], 1, 5);
        let meter = QueryMeter::new();
        let d = estimate_discrepancy(
            &model, &schedule, &embedder, &[0.5; 4], &cond(&[1, 2]), &null_condition(), &plan, &meter,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn identical_conditions_give_bitwise_zero() {
        let (schedule, embedder) = fixture();
        let model = OracleModel { schedule: &schedule, dim: 4 };
        let plan = MonteCarloPlan::new(vec![10, 20, 30], 2, 5);
        let meter = QueryMeter::new();
        let c = cond(&[1, 2, 3]);
        let d = estimate_discrepancy(
            &model, &schedule, &embedder, &[0.1, 0.2, 0.3, 0.4], &c, &c, &plan, &meter,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn oracle_discrepancy_concentrates_near_dim() {
        let (schedule, embedder) = fixture();
        let dim = 4;
        let model = OracleModel { schedule: &schedule, dim };
        // x0 = 0 makes the oracle exact: conditional term 0, null term ||eps||^2
        let mut plan = MonteCarloPlan::new(vec![25], 1, 5);
        plan.draws_per_timestep = 10_000;
        plan.m_draws = 10_000;
        plan.n_draws = 10_000;
        let meter = QueryMeter::new();
        let d = estimate_discrepancy(
            &model, &schedule, &embedder, &vec![0.0; dim], &cond(&[1]), &null_condition(), &plan, &meter,
        )
        .unwrap();
        let se = (2.0 * dim as f64 / 10_000f64).sqrt();
        assert!((d - dim as f64).abs() < 3.0 * se, "estimate {d} vs d={dim}");
    }

    #[test]
    fn elbo_proxy_signs_and_oracle() {
        let (schedule, embedder) = fixture();
        let dim = 4;
        let zero = ZeroModel { dim };
        let oracle = OracleModel { schedule: &schedule, dim };
        let mut plan = MonteCarloPlan::new(vec![25], 1, 7);
        plan.m_draws = 10_000;
        plan.n_draws = 10_000;
        let meter = QueryMeter::new();
        let l_oracle = estimate_elbo_proxy(
            &oracle, &schedule, &embedder, &vec![0.0; dim], &cond(&[1]), &plan, &meter,
        )
        .unwrap();
        assert_eq!(l_oracle, 0.0);
        let l_zero =
            estimate_elbo_proxy(&zero, &schedule, &embedder, &vec![0.0; dim], &cond(&[1]), &plan, &meter)
                .unwrap();
        let se = (2.0 * dim as f64 / 10_000f64).sqrt();
        assert!((l_zero + dim as f64).abs() < 3.0 * se);
        assert!(l_zero <= 0.0);
    }

    fn reduction_k4() -> ReducedConditionSet {
        ReducedConditionSet {
            entries: vec![cond(&[1]), cond(&[2]), cond(&[1, 2]), null_condition()],
            strategy: ReductionStrategy::Clip,
        }
    }

    #[test]
    fn score_point_query_budget_is_m_plus_kn() {
        let (schedule, embedder) = fixture();
        let model = OracleModel { schedule: &schedule, dim: 4 };
        let plan = MonteCarloPlan::new(vec![10, 25, 40], 1, 11);
        let meter = QueryMeter::new();
        let est = score_point(
            &model, &schedule, &embedder, &[0.0; 4], &cond(&[1, 2, 3]), &reduction_k4(), &plan, &meter,
        )
        .unwrap();
        assert_eq!(est.query_count, 15); // M + K*N = 3 + 4*3
        assert_eq!(meter.count(), 15);
        assert_eq!(est.discrepancies.len(), 4);
        assert_eq!(est.draw_records.len(), 3);
    }

    #[test]
    fn score_point_null_only_budget() {
        let (schedule, embedder) = fixture();
        let model = OracleModel { schedule: &schedule, dim: 4 };
        let plan = MonteCarloPlan::new(vec![25], 1, 11);
        let meter = QueryMeter::new();
        let reduction = ReducedConditionSet {
            entries: vec![null_condition()],
            strategy: ReductionStrategy::Clip,
        };
        let est = score_point(
            &model, &schedule, &embedder, &[0.0; 4], &cond(&[1]), &reduction, &plan, &meter,
        )
        .unwrap();
        assert_eq!(est.query_count, 2); // M + K*N = 1 + 1*1
    }

    #[test]
    fn score_point_matches_standalone_estimators_bitwise() {
        let (schedule, embedder) = fixture();
        let model = OracleModel { schedule: &schedule, dim: 4 };
        let plan = MonteCarloPlan::new(vec![10, 25, 40], 1, 13);
        let x = [0.3, -0.2, 0.9, 0.0];
        let c = cond(&[1, 2, 3]);
        let reduction = reduction_k4();
        let meter = QueryMeter::new();
        let est = score_point(&model, &schedule, &embedder, &x, &c, &reduction, &plan, &meter).unwrap();
        for (i, entry) in reduction.entries.iter().enumerate() {
            let d = estimate_discrepancy(
                &model, &schedule, &embedder, &x, &c, entry, &plan, &meter,
            )
            .unwrap();
            assert_eq!(est.discrepancies[i], d, "discrepancy {i} must reuse bitwise");
        }
        let l = estimate_elbo_proxy(&model, &schedule, &embedder, &x, &c, &plan, &meter).unwrap();
        assert_eq!(est.elbo_proxy, l);
    }

    #[test]
    fn score_point_blind_model_zero_discrepancies_negative_proxy() {
        let (schedule, embedder) = fixture();
        let model = ZeroModel { dim: 4 };
        let plan = MonteCarloPlan::new(vec![10, 25, 40], 1, 17);
        let meter = QueryMeter::new();
        let est = score_point(
            &model, &schedule, &embedder, &[0.5; 4], &cond(&[1, 2]), &reduction_k4(), &plan, &meter,
        )
        .unwrap();
        assert!(est.discrepancies.iter().all(|&d| d == 0.0));
        assert!(est.elbo_proxy < 0.0);
        let v = build_feature_vector(&est);
        assert_eq!(v.len(), 5);
        assert_eq!(v.0[..4], est.discrepancies[..]);
        assert_eq!(v.0[4], est.elbo_proxy);
    }

    #[test]
    fn estimator_linearity_over_disjoint_draw_sets() {
        let (schedule, embedder) = fixture();
        let model = OracleModel { schedule: &schedule, dim: 4 };
        let plan = MonteCarloPlan::new(vec![10, 25], 1, 19);
        let x = [0.1, 0.7, -0.4, 0.2];
        let c_embed = embedder.embed(&cond(&[1, 2])).unwrap();
        let n_embed = embedder.embed(&null_condition()).unwrap();
        let meter = QueryMeter::new();
        let draws = plan.generate_draws(12, 4);
        let diff_over = |slice: &[(usize, Vec<f64>)]| -> f64 {
            let cond_sq =
                conditional_sq_errs(&model, &schedule, &x, &c_embed, slice, &meter).unwrap();
            let red_sq =
                conditional_sq_errs(&model, &schedule, &x, &n_embed, slice, &meter).unwrap();
            paired_difference_mean(&red_sq, &cond_sq)
        };
        let whole = diff_over(&draws);
        let first = diff_over(&draws[..5]);
        let second = diff_over(&draws[5..]);
        let weighted = (5.0 * first + 7.0 * second) / 12.0;
        assert!((whole - weighted).abs() < 1e-12);
    }

    #[test]
    fn variance_shrinks_with_draw_count() {
        let (schedule, embedder) = fixture();
        let model = OracleModel { schedule: &schedule, dim: 4 };
        let x = [0.0; 4];
        let c = cond(&[1]);
        let null = null_condition();
        let meter = QueryMeter::new();
        let estimates = |n: usize| -> Vec<f64> {
            (0..200u64)
                .map(|rep| {
                    let mut plan = MonteCarloPlan::new(vec![25], n, 1000 + rep);
                    plan.m_draws = n;
                    plan.n_draws = n;
                    estimate_discrepancy(
                        &model, &schedule, &embedder, &x, &c, &null, &plan, &meter,
                    )
                    .unwrap()
                })
                .collect()
        };
        let var = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let v1 = var(&estimates(1));
        let v16 = var(&estimates(16));
        assert!(v16 < v1 / 8.0, "var(N=16)={v16} not below var(N=1)/8={}", v1 / 8.0);
    }

    #[test]
    fn calibration_returns_single_candidate_and_needs_labels() {
        let (schedule, embedder) = fixture();
        let model = ZeroModel { dim: 4 };
        let probe = vec![
            (vec![0.1; 4], cond(&[1]), true),
            (vec![0.9; 4], cond(&[2]), false),
        ];
        let w = calibrate_timestep_window(&model, &schedule, &embedder, &probe, &[17], 3, 2).unwrap();
        assert_eq!(w, vec![17]);
        let single: Vec<(Vec<f64>, Condition, bool)> =
            vec![(vec![0.1; 4], cond(&[1]), true)];
        assert!(calibrate_timestep_window(&model, &schedule, &embedder, &single, &[17], 3, 2).is_err());
    }
}
