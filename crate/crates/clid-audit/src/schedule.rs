//! Forward-process noise schedule tables.
//!
//! Timesteps are 1-based in the math; `betas[i]` stores the value for
//! timestep `i + 1`. `alpha_bars` is the running product of `1 - beta` and
//! is strictly decreasing for any valid beta range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the reverse-process standard deviation is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMode {
    /// `sigma_t^2 = beta_t`.
    Beta,
    /// Posterior variance `beta~_t = (1 - abar_{t-1}) / (1 - abar_t) * beta_t`.
    Posterior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub total_steps: usize,
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
    pub sigmas: Vec<f64>,
}

impl NoiseSchedule {
    /// `beta_t` for 1-based timestep `t`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// `alpha_t` for 1-based timestep `t`.
    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `abar_t` for 1-based timestep `t`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// `sigma_t` for 1-based timestep `t`.
    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t - 1]
    }

    pub fn contains_timestep(&self, t: usize) -> bool {
        t >= 1 && t <= self.total_steps
    }

    /// Check the structural invariants of the tables.
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::InvalidArgument("schedule has zero steps".into()));
        }
        let n = self.total_steps;
        if self.betas.len() != n
            || self.alphas.len() != n
            || self.alpha_bars.len() != n
            || self.sigmas.len() != n
        {
            return Err(Error::DimensionMismatch(
                "schedule table lengths disagree with total_steps".into(),
            ));
        }
        let mut product = 1.0;
        for i in 0..n {
            let b = self.betas[i];
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "beta[{i}] = {b} outside (0, 1)"
                )));
            }
            product *= 1.0 - b;
            let rel = (self.alpha_bars[i] - product).abs() / product.abs().max(1e-300);
            if rel > 1e-12 {
                return Err(Error::Numerical(format!(
                    "alpha_bars[{i}] deviates from running product by relative {rel:e}"
                )));
            }
            if i > 0 && self.alpha_bars[i] >= self.alpha_bars[i - 1] {
                return Err(Error::Numerical("alpha_bars not strictly decreasing".into()));
            }
            if self.sigmas[i] < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "sigma[{i}] = {} negative",
                    self.sigmas[i]
                )));
            }
        }
        Ok(())
    }
}

/// Build a linear beta schedule, endpoints inclusive.
///
/// For `total_steps == 1` the single beta is `beta_start`.
pub fn make_linear_schedule(
    total_steps: usize,
    beta_start: f64,
    beta_end: f64,
    sigma_mode: SigmaMode,
) -> Result<NoiseSchedule> {
    if total_steps == 0 {
        return Err(Error::InvalidArgument("total_steps must be >= 1".into()));
    }
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "beta range must satisfy 0 < start <= end < 1, got [{beta_start}, {beta_end}]"
        )));
    }
    let n = total_steps;
    let mut betas = Vec::with_capacity(n);
    for i in 0..n {
        let frac = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
        betas.push(beta_start + frac * (beta_end - beta_start));
    }
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bars = Vec::with_capacity(n);
    let mut product = 1.0;
    for &a in &alphas {
        product *= a;
        alpha_bars.push(product);
    }
    let sigmas: Vec<f64> = (0..n)
        .map(|i| {
            let var = match sigma_mode {
                SigmaMode::Beta => betas[i],
                SigmaMode::Posterior => {
                    let abar_prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                    (1.0 - abar_prev) / (1.0 - alpha_bars[i]) * betas[i]
                }
            };
            var.sqrt()
        })
        .collect();
    let schedule = NoiseSchedule {
        total_steps,
        betas,
        alphas,
        alpha_bars,
        sigmas,
    };
    schedule.validate()?;
    Ok(schedule)
}

/// Closed-form forward marginal: `x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
pub fn forward_diffuse(
    x0: &[f64],
    t: usize,
    eps: &[f64],
    schedule: &NoiseSchedule,
) -> Result<Vec<f64>> {
    if !schedule.contains_timestep(t) {
        return Err(Error::InvalidArgument(format!(
            "timestep {t} outside [1, {}]",
            schedule.total_steps
        )));
    }
    if x0.len() != eps.len() {
        return Err(Error::DimensionMismatch(format!(
            "x0 has dim {}, eps has dim {}",
            x0.len(),
            eps.len()
        )));
    }
    let abar = schedule.alpha_bar(t);
    let signal = abar.sqrt();
    let noise = (1.0 - abar).sqrt();
    Ok(x0
        .iter()
        .zip(eps)
        .map(|(x, e)| signal * x + noise * e)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_product_alpha_bars() {
        // betas 0.1..0.4 over four steps via the inclusive interpolation
        let s = make_linear_schedule(4, 0.1, 0.4, SigmaMode::Beta).unwrap();
        let expect_betas = [0.1, 0.2, 0.3, 0.4];
        let expect_abars = [0.9, 0.72, 0.504, 0.3024];
        for i in 0..4 {
            assert!((s.betas[i] - expect_betas[i]).abs() < 1e-15);
            assert!((s.alpha_bars[i] - expect_abars[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn single_step_schedule() {
        let s = make_linear_schedule(1, 0.5, 0.5, SigmaMode::Beta).unwrap();
        assert_eq!(s.alpha_bars, vec![0.5]);
        assert!((s.sigmas[0] - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn alpha_bars_strictly_decreasing() {
        let s = make_linear_schedule(100, 1e-4, 0.05, SigmaMode::Beta).unwrap();
        for i in 1..100 {
            assert!(s.alpha_bars[i] < s.alpha_bars[i - 1]);
        }
    }

    #[test]
    fn posterior_sigma_starts_at_zero() {
        let s = make_linear_schedule(10, 0.01, 0.2, SigmaMode::Posterior).unwrap();
        assert_eq!(s.sigmas[0], 0.0);
        for i in 1..10 {
            assert!(s.sigmas[i] > 0.0);
        }
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(make_linear_schedule(0, 0.1, 0.2, SigmaMode::Beta).is_err());
        assert!(make_linear_schedule(4, 0.0, 0.2, SigmaMode::Beta).is_err());
        assert!(make_linear_schedule(4, 0.1, 1.0, SigmaMode::Beta).is_err());
        assert!(make_linear_schedule(4, 0.3, 0.2, SigmaMode::Beta).is_err());
    }

    #[test]
    fn forward_diffuse_matches_closed_form() {
        // abar = 0.25 exactly, via a hand-built schedule
        let s = NoiseSchedule {
            total_steps: 1,
            betas: vec![0.75],
            alphas: vec![0.25],
            alpha_bars: vec![0.25],
            sigmas: vec![0.75f64.sqrt()],
        };
        let xt = forward_diffuse(&[2.0, 0.0], 1, &[0.0, 0.0], &s).unwrap();
        assert_eq!(xt, vec![1.0, 0.0]);
        let xt = forward_diffuse(&[2.0, 0.0], 1, &[0.0, 2.0], &s).unwrap();
        assert!((xt[0] - 1.0).abs() < 1e-12);
        assert!((xt[1] - 1.7320508).abs() < 1e-6);
    }

    #[test]
    fn forward_diffuse_zero_noise_weight_limit() {
        // abar = 1 limit: x_t = x0 regardless of eps
        let s = NoiseSchedule {
            total_steps: 1,
            betas: vec![1e-9],
            alphas: vec![1.0],
            alpha_bars: vec![1.0],
            sigmas: vec![0.0],
        };
        let x0 = [0.3, -1.2, 4.0];
        let xt = forward_diffuse(&x0, 1, &[5.0, 5.0, 5.0], &s).unwrap();
        assert_eq!(xt, x0.to_vec());
    }

    #[test]
    fn forward_diffuse_rejects_bad_inputs() {
        let s = make_linear_schedule(4, 0.1, 0.4, SigmaMode::Beta).unwrap();
        assert!(forward_diffuse(&[1.0], 0, &[1.0], &s).is_err());
        assert!(forward_diffuse(&[1.0], 5, &[1.0], &s).is_err());
        assert!(forward_diffuse(&[1.0, 2.0], 1, &[1.0], &s).is_err());
    }
}
