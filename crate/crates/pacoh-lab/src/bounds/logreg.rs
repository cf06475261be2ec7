//! Monte-Carlo evidence and transfer error for the binary-classification
//! case study: linear classifiers, Gaussian priors over the weights, and the
//! bounded misclassification loss.

use serde::{Deserialize, Serialize};

use super::evaluate::EvidenceModel;
use super::PriorSampler;
use crate::envs::{gen_logreg_env, LogregEnvConfig, TaskDataset};
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, softmax, DiagonalGaussian, RngStream};

/// Loss used to weight posterior samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorLoss {
    Logistic,
    ZeroOne,
}

/// Numerically stable logistic loss `-y log g(z) - (1-y) log(1 - g(z))`.
pub fn logistic_loss(score: f64, y: f64) -> f64 {
    // log(1 + e^{-z}) + (1-y) z, rearranged to avoid overflow.
    let softplus_neg = if score > 0.0 {
        (-score).exp().ln_1p()
    } else {
        -score + score.exp().ln_1p()
    };
    softplus_neg + (1.0 - y) * score
}

/// Misclassification loss of the linear classifier `1(w·x > 0)`.
pub fn zero_one_loss(score: f64, y: f64) -> f64 {
    let predicted = if score > 0.0 { 1.0 } else { 0.0 };
    if (predicted - y).abs() > 0.5 {
        1.0
    } else {
        0.0
    }
}

fn empirical_loss(
    w: &[f64],
    task: &TaskDataset,
    loss: PosteriorLoss,
) -> f64 {
    let mut acc = 0.0;
    for (row, &y) in task.inputs.row_iter().zip(&task.targets) {
        let score: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
        acc += match loss {
            PosteriorLoss::Logistic => logistic_loss(score, y),
            PosteriorLoss::ZeroOne => zero_one_loss(score, y),
        };
    }
    acc / task.len() as f64
}

/// Evidence model for the classification bound: Gaussian priors over the
/// classifier weights, evidence estimated by a log-sum-exp Monte-Carlo
/// average over `is_draws` prior draws of `exp(-beta * loss)`.
pub struct LogregEvidence {
    pub hyper: DiagonalGaussian,
    pub prior_std: f64,
    pub is_draws: usize,
    /// Loss entering the evidence; the bound for the misclassification error
    /// uses the zero-one loss.
    pub loss: PosteriorLoss,
}

impl EvidenceModel for LogregEvidence {
    type Prior = Vec<f64>;

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        self.hyper.sample(rng)
    }

    fn log_z(
        &self,
        prior: &Vec<f64>,
        task: &TaskDataset,
        beta: f64,
        rng: &mut RngStream,
    ) -> Result<f64> {
        let d = prior.len();
        let mut scaled = Vec::with_capacity(self.is_draws);
        for l in 0..self.is_draws as u64 {
            let mut draw_rng = rng.fork(l);
            let w: Vec<f64> =
                prior.iter().map(|m| m + self.prior_std * draw_rng.normal()).collect();
            debug_assert_eq!(w.len(), d);
            scaled.push(-beta * empirical_loss(&w, task, self.loss));
        }
        Ok(logsumexp(&scaled)? - (self.is_draws as f64).ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferErrorConfig {
    /// Test tasks sampled from the environment.
    pub mc_tasks: usize,
    /// Fresh points per task for the expected-error estimate.
    pub mc_test_points: usize,
    /// Gibbs-posterior importance-sampling draws per (task, prior) pair.
    pub posterior_draws: usize,
    /// Priors drawn per task when sampling from a Gaussian source.
    pub priors_per_task: usize,
    /// Loss weighting the posterior importance samples.
    pub posterior_loss: PosteriorLoss,
    pub min_ess: f64,
}

impl Default for TransferErrorConfig {
    fn default() -> Self {
        Self {
            mc_tasks: 100,
            mc_test_points: 200,
            posterior_draws: 1000,
            priors_per_task: 20,
            posterior_loss: PosteriorLoss::Logistic,
            min_ess: 50.0,
        }
    }
}

/// Monte-Carlo estimate of the expected misclassification Gibbs error on new
/// tasks: tasks and fresh test points come from the environment, priors from
/// `sampler`, and the Gibbs posterior is approximated by self-normalized
/// importance sampling from the prior. Returns `(mean, std error over
/// tasks)`; degenerate importance weights trigger
/// [`Error::EffectiveSampleSizeTooLow`].
#[allow(clippy::too_many_arguments)]
pub fn misclassification_transfer_error(
    sampler: &PriorSampler<'_>,
    env: &LogregEnvConfig,
    prior_std: f64,
    beta: f64,
    cfg: &TransferErrorConfig,
    seed: u64,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    let task_env = LogregEnvConfig {
        n_tasks: cfg.mc_tasks,
        samples_per_task: env.samples_per_task,
        query_points: cfg.mc_test_points,
        test_tasks: 0,
        ..env.clone()
    };
    let ds = gen_logreg_env(&task_env, seed);
    let mut per_task = Vec::with_capacity(cfg.mc_tasks);
    for (task, query) in ds.train_tasks.iter().zip(&ds.train_queries) {
        let task_rng = rng.fork(task.task_id ^ 0xe770);
        let mut prior_acc = 0.0;
        let n_priors = match sampler {
            PriorSampler::Weighted { .. } => 1,
            PriorSampler::Gaussian(_) => cfg.priors_per_task,
        };
        for p in 0..n_priors as u64 {
            let mu_p = sampler.draw(&mut task_rng.fork(p));
            prior_acc += gibbs_error_for_prior(
                &mu_p,
                prior_std,
                beta,
                task,
                query,
                cfg,
                &mut task_rng.fork(p ^ 0x9d),
            )?;
        }
        per_task.push(prior_acc / n_priors as f64);
    }
    let n = per_task.len() as f64;
    let mean = per_task.iter().sum::<f64>() / n;
    let var = per_task.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

fn gibbs_error_for_prior(
    mu_p: &[f64],
    prior_std: f64,
    beta: f64,
    context: &TaskDataset,
    query: &TaskDataset,
    cfg: &TransferErrorConfig,
    rng: &mut RngStream,
) -> Result<f64> {
    let d = mu_p.len();
    let mut log_weights = Vec::with_capacity(cfg.posterior_draws);
    let mut errors = Vec::with_capacity(cfg.posterior_draws);
    for _ in 0..cfg.posterior_draws {
        let w: Vec<f64> = (0..d).map(|i| mu_p[i] + prior_std * rng.normal()).collect();
        log_weights.push(-beta * empirical_loss(&w, context, cfg.posterior_loss));
        errors.push(empirical_loss(&w, query, PosteriorLoss::ZeroOne));
    }
    let weights = softmax(&log_weights)?;
    let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    if ess < cfg.min_ess {
        return Err(Error::EffectiveSampleSizeTooLow { ess, min: cfg.min_ess });
    }
    Ok(weights.iter().zip(&errors).map(|(w, e)| w * e).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{LabelMode, TaskMeta};
    use crate::numerics::DenseMatrix;

    #[test]
    fn logistic_loss_reference() {
        // z = 0: loss = log 2 for either label.
        assert!((logistic_loss(0.0, 1.0) - 2.0f64.ln()).abs() < 1e-12);
        assert!((logistic_loss(0.0, 0.0) - 2.0f64.ln()).abs() < 1e-12);
        // Large positive score with label 1: loss ~ 0.
        assert!(logistic_loss(30.0, 1.0) < 1e-12);
        // No overflow at extreme scores.
        assert!(logistic_loss(-1000.0, 0.0).is_finite());
    }

    #[test]
    fn true_classifier_noiseless_labels_zero_error() {
        let env = LogregEnvConfig {
            n_tasks: 20,
            label_mode: LabelMode::Threshold,
            task_mean: 10.0,
            task_std: 0.0,
            ..Default::default()
        };
        // Hyper sampler concentrated exactly at the label-generating weights
        // with a tiny prior spread relative to the weight scale.
        let w_star = vec![10.0, 10.0];
        let weights = vec![1.0];
        let samples = vec![w_star];
        let sampler = PriorSampler::Weighted { samples: &samples, weights: &weights };
        let cfg = TransferErrorConfig {
            mc_tasks: 10,
            mc_test_points: 100,
            posterior_draws: 400,
            min_ess: 10.0,
            ..Default::default()
        };
        let (err, _) = misclassification_transfer_error(
            &sampler,
            &env,
            0.01,
            5.0f64.sqrt(),
            &cfg,
            3,
            &mut RngStream::new(4, 0),
        )
        .unwrap();
        assert!(err < 0.02, "error {err}");
    }

    #[test]
    fn zero_signal_environment_gives_half_error() {
        // w* = 0 makes labels fair coin flips, so every classifier errs at
        // rate 1/2 regardless of the (far-off) prior location.
        let env = LogregEnvConfig { task_mean: 0.0, task_std: 0.0, ..Default::default() };
        let hyper = DiagonalGaussian::new(vec![8.0, -8.0], vec![0.0, 0.0]).unwrap();
        let sampler = PriorSampler::Gaussian(&hyper);
        let cfg = TransferErrorConfig {
            mc_tasks: 60,
            mc_test_points: 100,
            posterior_draws: 1500,
            priors_per_task: 4,
            min_ess: 10.0,
            ..Default::default()
        };
        let (err, se) = misclassification_transfer_error(
            &sampler,
            &env,
            1.0,
            5.0f64.sqrt(),
            &cfg,
            5,
            &mut RngStream::new(6, 0),
        )
        .unwrap();
        assert!((err - 0.5).abs() < 4.0 * se.max(0.01), "error {err} se {se}");
    }

    #[test]
    fn one_dimensional_posterior_matches_grid_quadrature() {
        // d=1 toy task: the posterior over the scalar weight is tractable on
        // a dense grid; the SNIS estimate must agree within MC error.
        let rows: Vec<Vec<f64>> = vec![vec![0.8], vec![-0.5], vec![0.3], vec![0.9]];
        let targets = vec![1.0, 0.0, 1.0, 1.0];
        let context = TaskDataset {
            task_id: 0,
            inputs: DenseMatrix::from_rows(&rows).unwrap(),
            targets,
            meta: Some(TaskMeta::LinearWeights(vec![2.0])),
        };
        let q_rows: Vec<Vec<f64>> = (0..200).map(|i| vec![-1.0 + i as f64 / 100.0]).collect();
        let q_targets: Vec<f64> =
            q_rows.iter().map(|r| if 2.0 * r[0] > 0.0 { 1.0 } else { 0.0 }).collect();
        let query = TaskDataset {
            task_id: 0,
            inputs: DenseMatrix::from_rows(&q_rows).unwrap(),
            targets: q_targets,
            meta: None,
        };
        let (mu_p, prior_std, beta) = (vec![0.5], 2.0, 2.0);
        let cfg = TransferErrorConfig {
            posterior_draws: 20_000,
            min_ess: 50.0,
            ..Default::default()
        };
        let got = gibbs_error_for_prior(
            &mu_p,
            prior_std,
            beta,
            &context,
            &query,
            &cfg,
            &mut RngStream::new(7, 0),
        )
        .unwrap();
        // Grid quadrature over w in [-10, 11].
        let steps = 40_000;
        let (lo, hi) = (-10.0, 11.0);
        let h = (hi - lo) / steps as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..steps {
            let w = [lo + (k as f64 + 0.5) * h];
            let z = (w[0] - mu_p[0]) / prior_std;
            let prior = (-0.5 * z * z).exp();
            let like = (-beta * empirical_loss(&w, &context, PosteriorLoss::Logistic)).exp();
            let err = empirical_loss(&w, &query, PosteriorLoss::ZeroOne);
            num += prior * like * err;
            den += prior * like;
        }
        let want = num / den;
        assert!((got - want).abs() < 0.02, "SNIS {got} vs quadrature {want}");
    }

    #[test]
    fn degenerate_weights_raise_ess_error() {
        // Enormous beta concentrates all weight on one draw.
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![(i as f64) / 3.0 - 1.0]).collect();
        let targets = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let context = TaskDataset {
            task_id: 0,
            inputs: DenseMatrix::from_rows(&rows).unwrap(),
            targets: targets.clone(),
            meta: None,
        };
        let query = context.clone();
        let cfg = TransferErrorConfig {
            posterior_draws: 200,
            min_ess: 50.0,
            ..Default::default()
        };
        let res = gibbs_error_for_prior(
            &[0.0],
            5.0,
            10_000.0,
            &context,
            &query,
            &cfg,
            &mut RngStream::new(8, 0),
        );
        assert!(matches!(res, Err(Error::EffectiveSampleSizeTooLow { .. })));
    }
}
