//! Ancestral DDPM sampling.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::condition::{Condition, ConditionEmbedder};
use crate::denoiser::NoisePredictor;
use crate::error::{Error, Result};
use crate::schedule::NoiseSchedule;

/// Sample `x_0` by running the reverse chain from `x_T ~ N(0, I)`.
///
/// The mean is derived from the predicted noise; no noise is added at the
/// final step. Aborts with a diagnostic if the chain produces NaN.
pub fn sample_ddpm<P: NoisePredictor + ?Sized>(
    model: &P,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
    c: &Condition,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<f64>> {
    let dim = model.data_dim();
    let c_embed = embedder.embed(c)?;
    let mut x: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for t in (1..=schedule.total_steps).rev() {
        let eps_hat = model.predict(&x, t, &c_embed);
        if eps_hat.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "predictor returned dim {}, expected {dim}",
                eps_hat.len()
            )));
        }
        let beta = schedule.beta(t);
        let alpha = schedule.alpha(t);
        let abar = schedule.alpha_bar(t);
        let coef = beta / (1.0 - abar).sqrt();
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        for i in 0..dim {
            x[i] = inv_sqrt_alpha * (x[i] - coef * eps_hat[i]);
        }
        if t > 1 {
            let sigma = schedule.sigma(t);
            if sigma > 0.0 {
                for v in x.iter_mut() {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!(
                "sample_ddpm produced non-finite state at timestep {t}"
            )));
        }
    }
    Ok(x)
}
