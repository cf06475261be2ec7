//! The meta-learner: hyper-posterior score evaluation, MAP/SVGD/VI
//! approximations of the optimal hyper-posterior, mini-batched meta-training,
//! per-task target training, and mixture predictive distributions.

mod checkpoint;
mod optimizer;
mod predictive;
mod svgd;
mod target;
mod train;
mod vi;

pub use checkpoint::{Checkpoint, ModelSpec, CHECKPOINT_VERSION};
pub use optimizer::{Optimizer, OptimizerKind};
pub use predictive::{predict_mixture, predict_mixture_categorical, PredictiveDistribution};
pub use svgd::{svgd_directions, svgd_step, BandwidthPolicy};
pub use target::{target_train, TargetTrainConfig};
pub use train::{
    meta_train, meta_train_with_hyper_prior, ApproxMethod, MetaTrainConfig, TrainLogRow,
};
pub use vi::vi_objective_and_grad;

use serde::{Deserialize, Serialize};

use crate::bnn::{mll_with_grad_lse, BnnConfig};
use crate::envs::TaskDataset;
use crate::error::{Error, Result};
use crate::gp::{gp_mll_grad, GpConfig};
use crate::numerics::{DiagonalGaussian, RngStream};

/// Approximation of the optimal hyper-posterior over prior parameters.
/// A MAP point estimate is the one-particle case of `Particles`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum HyperPosterior {
    Particles { particles: Vec<Vec<f64>> },
    Vi { mean: Vec<f64>, log_std: Vec<f64> },
}

impl HyperPosterior {
    /// Draws `count` prior parameter vectors for prediction. Particle
    /// variants return the particles themselves (count is ignored).
    pub fn prior_samples(&self, count: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
        match self {
            HyperPosterior::Particles { particles } => particles.clone(),
            HyperPosterior::Vi { mean, log_std } => {
                let q = DiagonalGaussian::new(mean.clone(), log_std.clone())
                    .expect("stored VI parameters are consistent");
                (0..count as u64).map(|i| q.sample(&mut rng.fork(i))).collect()
            }
        }
    }

    pub fn phi_dim(&self) -> usize {
        match self {
            HyperPosterior::Particles { particles } => {
                particles.first().map_or(0, |p| p.len())
            }
            HyperPosterior::Vi { mean, .. } => mean.len(),
        }
    }
}

/// How the bound temperatures scale with the number of tasks and samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaBetaMode {
    /// `lambda = sqrt(n)`, `beta_i = sqrt(m_i)`
    Sqrt,
    /// `lambda = n`, `beta_i = m_i`
    Linear,
}

impl LambdaBetaMode {
    pub fn lambda(&self, n: usize) -> f64 {
        match self {
            LambdaBetaMode::Sqrt => (n as f64).sqrt(),
            LambdaBetaMode::Linear => n as f64,
        }
    }

    pub fn beta(&self, m: usize) -> f64 {
        match self {
            LambdaBetaMode::Sqrt => (m as f64).sqrt(),
            LambdaBetaMode::Linear => m as f64,
        }
    }
}

/// A base-learner family exposing a (generalized) marginal log-likelihood
/// and its gradient with respect to the prior parameters.
pub trait ScoreModel: Sync {
    fn phi_dim(&self) -> usize;

    /// `log Z_beta(S, P_phi)` and its gradient with respect to `phi`.
    fn log_z(
        &self,
        phi: &[f64],
        task: &TaskDataset,
        beta: f64,
        rng: &mut RngStream,
    ) -> Result<(f64, Vec<f64>)>;

    /// Samples an initial particle from the hyper-prior.
    fn init_particle(&self, hyper_prior: &DiagonalGaussian, rng: &mut RngStream) -> Vec<f64> {
        hyper_prior.sample(rng)
    }
}

/// GP path: the marginal log-likelihood is exact and deterministic. Valid
/// for the `lambda = n, beta_i = m_i` temperature choice, where the Gibbs
/// posterior is the GP posterior.
pub struct GpScoreModel {
    pub cfg: GpConfig,
}

impl ScoreModel for GpScoreModel {
    fn phi_dim(&self) -> usize {
        self.cfg.phi_dim()
    }

    fn log_z(
        &self,
        phi: &[f64],
        task: &TaskDataset,
        _beta: f64,
        _rng: &mut RngStream,
    ) -> Result<(f64, Vec<f64>)> {
        gp_mll_grad(&self.cfg, phi, &task.inputs, &task.targets)
    }
}

/// BNN path: Monte-Carlo LSE estimate of the generalized marginal
/// log-likelihood with `mll_samples` reparametrized prior draws.
pub struct BnnScoreModel {
    pub cfg: BnnConfig,
    pub mll_samples: usize,
}

impl ScoreModel for BnnScoreModel {
    fn phi_dim(&self) -> usize {
        self.cfg.phi_dim()
    }

    fn log_z(
        &self,
        phi: &[f64],
        task: &TaskDataset,
        beta: f64,
        rng: &mut RngStream,
    ) -> Result<(f64, Vec<f64>)> {
        let (est, grad) = mll_with_grad_lse(
            &self.cfg,
            phi,
            &task.inputs,
            &task.targets,
            beta,
            self.mll_samples,
            rng,
        )?;
        Ok((est.value, grad))
    }
}

/// Unnormalized log hyper-posterior score and its gradient:
///
/// `log P(phi) + (n / |batch|) * sum_i lambda / (n beta_i + lambda) * log Z_beta_i(S_i, P_phi)`
///
/// `batch` pairs each task with its `beta_i`; `n_total` is the full task
/// count so mini-batches stay unbiased. With `mll_only` the hyper-prior term
/// is dropped. Per-task randomness forks off `rng` keyed by task id.
#[allow(clippy::too_many_arguments)]
pub fn pacoh_log_score<M: ScoreModel + ?Sized>(
    model: &M,
    phi: &[f64],
    batch: &[(&TaskDataset, f64)],
    hyper_prior: &DiagonalGaussian,
    lambda: f64,
    n_total: usize,
    mll_only: bool,
    rng: &RngStream,
) -> Result<(f64, Vec<f64>)> {
    let (mut score, mut grad) = if mll_only {
        (0.0, vec![0.0; phi.len()])
    } else {
        (hyper_prior.log_pdf(phi)?, hyper_prior.grad_log_pdf(phi)?)
    };
    if n_total > 0 && !batch.is_empty() {
        let scale = n_total as f64 / batch.len() as f64;
        for (task, beta) in batch {
            let weight = scale * lambda / (n_total as f64 * beta + lambda);
            let mut task_rng = rng.fork(task.task_id);
            let (z, gz) = model.log_z(phi, task, *beta, &mut task_rng)?;
            score += weight * z;
            for (dst, g) in grad.iter_mut().zip(&gz) {
                *dst += weight * g;
            }
        }
    }
    if !score.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::DivergenceDetected("hyper-posterior score is non-finite".into()));
    }
    Ok((score, grad))
}
