//! Strict JSON configuration schemas for the experiment subcommands.
//! Unknown keys are rejected; every output file records the hash of the
//! normalized configuration.

use serde::{Deserialize, Serialize};

use pacoh_lab::bnn::Likelihood;
use pacoh_lab::bo::Acquisition;
use pacoh_lab::bounds::{PosteriorLoss, TransferErrorConfig};
use pacoh_lab::envs::{EnvDescriptor, PeptidePoolConfig};
use pacoh_lab::fnv1a64;
use pacoh_lab::meta::{
    ApproxMethod, LambdaBetaMode, MetaTrainConfig, TargetTrainConfig,
};

/// Base-learner selection and architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Gp {
        hidden: Vec<usize>,
        feature_dim: usize,
        noise_variance: f64,
    },
    Bnn {
        hidden: Vec<usize>,
        likelihood: Likelihood,
        /// Monte-Carlo samples of the evidence estimator.
        mll_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaTrainFile {
    pub seed: u64,
    pub env_seed: u64,
    pub env: EnvDescriptor,
    pub model: ModelConfig,
    pub train: MetaTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaTestFile {
    pub seeds: Vec<u64>,
    pub env_seed: u64,
    pub env: EnvDescriptor,
    pub target: TargetTrainConfig,
    /// Gibbs temperature for target training: `beta = m` or `sqrt(m)`.
    pub beta_mode: LambdaBetaMode,
    /// Prior draws when the checkpoint stores a VI hyper-posterior.
    pub predict_samples: usize,
    pub calibration_levels: usize,
    /// Also evaluate on the meta-training tasks (held-out query points).
    pub evaluate_train_tasks: bool,
}

/// Environment-specific section of the bounds evaluator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundsEnv {
    Blr {
        dim: usize,
        samples_per_task: usize,
        task_mean: f64,
        task_std: f64,
        input_std: f64,
        noise_std: f64,
        prior_var: f64,
        hyper_var: f64,
        /// Likelihood variance of the quadratic loss.
        likelihood_var: f64,
    },
    Logreg {
        dim: usize,
        samples_per_task: usize,
        task_mean: f64,
        task_std: f64,
        prior_std: f64,
        hyper_std: f64,
        /// Prior draws of the evidence estimator per (task, prior).
        evidence_draws: usize,
        /// Loss entering the evidence of the bound.
        evidence_loss: PosteriorLoss,
        error: TransferErrorConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsFile {
    pub seed: u64,
    pub env: BoundsEnv,
    /// Task counts to sweep.
    pub n_sweep: Vec<usize>,
    pub delta: f64,
    pub lambda_beta: LambdaBetaMode,
    pub mc_priors: usize,
    /// Test tasks for the transfer-error estimate (0 disables it).
    pub error_test_tasks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoFile {
    pub seeds: Vec<u64>,
    pub pool_seed: u64,
    pub pool: PeptidePoolConfig,
    pub model: ModelConfig,
    pub algorithms: Vec<Acquisition>,
    pub rounds: usize,
    pub target: TargetTrainConfig,
    pub warm_start_steps: usize,
    pub cold_start: bool,
    pub linear_beta: bool,
}

/// Normalizes semantically equivalent configurations: one-particle SVGD is
/// the MAP method, so both hash and train identically.
pub fn normalize_train(mut cfg: MetaTrainConfig) -> MetaTrainConfig {
    if cfg.method == ApproxMethod::Svgd && cfg.particles == 1 {
        cfg.method = ApproxMethod::Map;
    }
    if cfg.method == ApproxMethod::Map {
        cfg.particles = 1;
    }
    cfg
}

/// FNV-1a hash (hex) of a serialized, normalized configuration.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    format!("{:016x}", fnv1a64(canonical.as_bytes()))
}
