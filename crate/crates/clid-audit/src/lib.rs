//! Train small conditional denoising-diffusion models on synthetic
//! image-analog data and audit them for training-set membership.
//!
//! The toolkit covers the full audit pipeline: a Gaussian-mixture toy
//! world with caption-like conditions, a conditional DDPM trained from
//! scratch, Monte Carlo estimation of conditional likelihood
//! discrepancies under reduced conditions, shadow-model calibration of
//! threshold and classifier attacks, and the evaluation battery
//! (ROC/AUC/ASR/TPR@1%FPR, trajectory studies, distribution-distance
//! checks, and an exact discrete identity check for the underlying
//! overfitting-gap equivalence).
//!
//! Start from [`config::ExperimentConfig`] and [`experiment::run_audit`],
//! or run the `clid-audit` binary; the `examples/` directory walks through
//! each capability.

pub mod attack;
pub mod condition;
pub mod config;
pub mod denoiser;
pub mod distances;
pub mod error;
pub mod experiment;
pub mod gbdt;
pub mod indicator;
pub mod manifest;
pub mod metrics;
pub mod persist;
pub mod reduction;
pub mod rng;
pub mod sample;
pub mod schedule;
pub mod svg;
pub mod theorem;
pub mod train;
pub mod transforms;
pub mod world;

pub use condition::{null_condition, Condition, ConditionEmbedder, TokenId, TokenSeq};
pub use denoiser::{predict_eps, DenoiserNet, NetArch, NoisePredictor};
pub use error::{Error, Result};
pub use indicator::{
    build_feature_vector, estimate_discrepancy, estimate_elbo_proxy, score_point,
    FeatureVector, IndicatorEstimate, MonteCarloPlan, QueryMeter,
};
pub use metrics::{asr, compute_roc_auc, decide, tpr_at_fpr, LabeledScores, MetricsReport};
pub use schedule::{forward_diffuse, make_linear_schedule, NoiseSchedule, SigmaMode};
pub use train::{diffusion_loss, resume_train, train, ModelCheckpoint, TrainedModel, TrainingConfig};
pub use world::{
    generate_world, pseudo_caption, sample_dataset, split_dataset, GaussianMixtureWorld,
    SplitSpec, ToyDataset,
};
