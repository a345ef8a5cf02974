//! Diffusion training: the noise-prediction loss with hand-rolled
//! gradients, an Adam loop, and resumable checkpoints.
//!
//! The loss for a batch is the mean squared norm of the prediction
//! residual, with `t ~ Uniform{1..T}` and fresh standard-normal noise per
//! element, so a model that outputs zero scores close to the data
//! dimensionality in expectation.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::condition::{Condition, ConditionEmbedder};
use crate::denoiser::DenoiserNet;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::schedule::{forward_diffuse, NoiseSchedule};
use crate::transforms::{augment, AugmentationPolicy};
use crate::world::ToyDataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub checkpoint_every: usize,
    pub augmentation: AugmentationPolicy,
    pub rng_seed: u64,
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        self.augmentation.validate()
    }
}

/// Everything needed to score or sample: network, schedule, embedder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub net: DenoiserNet,
    pub schedule: NoiseSchedule,
    pub embedder: ConditionEmbedder,
}

/// Adam moment estimates, kept in checkpoints so a run can resume exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: usize,
}

impl OptimizerState {
    fn new(param_count: usize) -> Self {
        OptimizerState {
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub step: usize,
    pub model: TrainedModel,
    /// Seed the training run started from.
    pub train_seed: u64,
    pub optimizer: OptimizerState,
    /// RNG state at the checkpoint, for exact resume.
    pub rng_state: ChaCha12Rng,
}

/// A completed (or checkpointed) training run.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoints: Vec<ModelCheckpoint>,
    pub losses: Vec<f64>,
}

impl TrainRun {
    pub fn final_model(&self) -> &TrainedModel {
        &self.checkpoints.last().expect("run has checkpoints").model
    }
}

/// Batch loss and flat parameter gradient.
///
/// Draws `(t, eps)` per element from `rng`, diffuses, runs the network,
/// and backpropagates the mean squared residual norm.
pub fn diffusion_loss(
    net: &DenoiserNet,
    embedder: &ConditionEmbedder,
    schedule: &NoiseSchedule,
    batch: &[(Vec<f64>, Condition)],
    rng: &mut ChaCha12Rng,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("diffusion_loss on empty batch".into()));
    }
    let dim = net.arch.data_dim;
    let mut grad = vec![0.0; net.param_count()];
    let mut loss = 0.0;
    let inv_batch = 1.0 / batch.len() as f64;
    for (x0, cond) in batch {
        if x0.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "batch element has dim {}, net expects {dim}",
                x0.len()
            )));
        }
        let c_embed = embedder.embed(cond)?;
        let t = rng.gen_range(1..=schedule.total_steps);
        let eps: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x_t = forward_diffuse(x0, t, &eps, schedule)?;
        let input = net.assemble_input(&x_t, t, &c_embed)?;
        let (out, cache) = net.forward_cached(&input);
        let mut d_out = Vec::with_capacity(dim);
        for (o, e) in out.iter().zip(&eps) {
            let r = o - e;
            loss += r * r * inv_batch;
            d_out.push(2.0 * r * inv_batch);
        }
        net.backward(&cache, &d_out, &mut grad);
    }
    Ok((loss, grad))
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn adam_step(params: &mut [f64], grad: &[f64], state: &mut OptimizerState, lr: f64) {
    state.step += 1;
    let t = state.step as f64;
    let bc1 = 1.0 - ADAM_BETA1.powf(t);
    let bc2 = 1.0 - ADAM_BETA2.powf(t);
    for i in 0..params.len() {
        let g = grad[i];
        state.first_moment[i] = ADAM_BETA1 * state.first_moment[i] + (1.0 - ADAM_BETA1) * g;
        state.second_moment[i] = ADAM_BETA2 * state.second_moment[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.first_moment[i] / bc1;
        let v_hat = state.second_moment[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

struct TrainState {
    net: DenoiserNet,
    optimizer: OptimizerState,
    rng: ChaCha12Rng,
    step: usize,
}

fn run_steps(
    mut state: TrainState,
    dataset: &ToyDataset,
    config: &TrainingConfig,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
) -> Result<TrainRun> {
    let mut checkpoints = Vec::new();
    let mut losses = Vec::new();
    let snapshot = |s: &TrainState| ModelCheckpoint {
        step: s.step,
        model: TrainedModel {
            net: s.net.clone(),
            schedule: schedule.clone(),
            embedder: embedder.clone(),
        },
        train_seed: config.rng_seed,
        optimizer: s.optimizer.clone(),
        rng_state: s.rng.clone(),
    };
    if state.step == 0 {
        checkpoints.push(snapshot(&state));
    }
    while state.step < config.total_steps {
        let mut batch = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size {
            let idx = state.rng.gen_range(0..dataset.len());
            let point = &dataset.points[idx];
            let x = augment(&point.x, &config.augmentation, &mut state.rng);
            batch.push((x, Condition::Tokens(point.c.clone())));
        }
        let (loss, grad) = diffusion_loss(&state.net, embedder, schedule, &batch, &mut state.rng)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training diverged at step {}: loss = {loss}",
                state.step + 1
            )));
        }
        adam_step(&mut state.net.params, &grad, &mut state.optimizer, config.learning_rate);
        state.step += 1;
        losses.push(loss);
        if state.step % config.checkpoint_every == 0 || state.step == config.total_steps {
            checkpoints.push(snapshot(&state));
        }
    }
    Ok(TrainRun { checkpoints, losses })
}

/// Train from a fresh network. Checkpoints are emitted at step 0, every
/// `checkpoint_every` steps, and at the final step.
pub fn train(
    net: DenoiserNet,
    dataset: &ToyDataset,
    config: &TrainingConfig,
    schedule: &NoiseSchedule,
    embedder: &ConditionEmbedder,
) -> Result<TrainRun> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    let optimizer = OptimizerState::new(net.param_count());
    let state = TrainState {
        net,
        optimizer,
        rng: rng_from_seed(config.rng_seed),
        step: 0,
    };
    run_steps(state, dataset, config, schedule, embedder)
}

/// Continue an interrupted run from a checkpoint up to `config.total_steps`,
/// reproducing the uninterrupted run exactly.
pub fn resume_train(
    checkpoint: &ModelCheckpoint,
    dataset: &ToyDataset,
    config: &TrainingConfig,
) -> Result<TrainRun> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    if checkpoint.step > config.total_steps {
        return Err(Error::InvalidArgument(format!(
            "checkpoint step {} beyond configured total {}",
            checkpoint.step, config.total_steps
        )));
    }
    let state = TrainState {
        net: checkpoint.model.net.clone(),
        optimizer: checkpoint.optimizer.clone(),
        rng: checkpoint.rng_state.clone(),
        step: checkpoint.step,
    };
    run_steps(
        state,
        dataset,
        config,
        &checkpoint.model.schedule,
        &checkpoint.model.embedder,
    )
}
