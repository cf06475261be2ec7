//! Monte-Carlo evaluation of the meta-level bound, the per-task bound, and
//! their gap over one shared set of prior samples.

use rayon::prelude::*;

use super::{BoundReport, ComplexityTerms};
use crate::envs::TaskDataset;
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, softmax, RngStream};

/// A prior family whose evidence `log Z_beta(S, P)` can be evaluated (exactly
/// or by Monte Carlo) for priors drawn from the hyper-prior.
pub trait EvidenceModel: Sync {
    type Prior: Clone + Send + Sync;

    fn sample_prior(&self, rng: &mut RngStream) -> Self::Prior;

    fn log_z(
        &self,
        prior: &Self::Prior,
        task: &TaskDataset,
        beta: f64,
        rng: &mut RngStream,
    ) -> Result<f64>;
}

/// Shared Monte-Carlo sample: per-prior sums of task evidences.
pub struct LogZSamples<P> {
    pub priors: Vec<P>,
    /// `totals[j] = Σ_i log Z_beta(S_i, P_j)`
    pub totals: Vec<f64>,
}

/// Draws `mc_priors` priors from the hyper-prior and evaluates the evidence
/// sum for each. Prior `j` uses the stream fork `(j)`; the evidence of task
/// `i` under prior `j` uses fork `(j, task_id)`.
pub fn sample_log_z<E: EvidenceModel>(
    model: &E,
    tasks: &[TaskDataset],
    beta: f64,
    mc_priors: usize,
    rng: &RngStream,
) -> Result<LogZSamples<E::Prior>> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    if mc_priors == 0 {
        return Err(Error::InvalidConfig("mc_priors must be positive".into()));
    }
    let results: Vec<Result<(E::Prior, f64)>> = (0..mc_priors as u64)
        .into_par_iter()
        .map(|j| {
            let mut prior_rng = rng.fork(j);
            let prior = model.sample_prior(&mut prior_rng);
            let mut total = 0.0;
            for task in tasks {
                let mut z_rng = prior_rng.fork(task.task_id);
                total += model.log_z(&prior, task, beta, &mut z_rng)?;
            }
            Ok((prior, total))
        })
        .collect();
    let mut priors = Vec::with_capacity(mc_priors);
    let mut totals = Vec::with_capacity(mc_priors);
    for r in results {
        let (p, t) = r?;
        priors.push(p);
        totals.push(t);
    }
    Ok(LogZSamples { priors, totals })
}

/// All bound quantities derived from one shared prior sample.
pub struct BoundSuite<P> {
    pub pacoh: BoundReport,
    pub per_task: BoundReport,
    /// Gap of the bounds per the centered CGF formula; identical to
    /// `per_task.total - pacoh.total` because the samples are shared.
    pub delta_improvement: f64,
    pub delta_std_error: f64,
    /// Prior samples with their self-normalized hyper-posterior weights,
    /// reusable for transfer-error estimation under the meta-level posterior.
    pub samples: LogZSamples<P>,
    pub posterior_weights: Vec<f64>,
}

/// Evaluates the meta-level bound `-(1/lambda + 1/(n beta)) log Ẑ² + C`, the
/// per-task bound `-(1/(n beta)) mean_j Σ_i log Z + C`, and their gap, all
/// from one prior sample of size `mc_priors`.
pub fn evaluate_bounds<E: EvidenceModel>(
    model: &E,
    tasks: &[TaskDataset],
    lambda: f64,
    beta: f64,
    complexity: &ComplexityTerms,
    mc_priors: usize,
    rng: &RngStream,
) -> Result<BoundSuite<E::Prior>> {
    let samples = sample_log_z(model, tasks, beta, mc_priors, rng)?;
    let n = tasks.len() as f64;
    let j = mc_priors as f64;
    let weight = lambda / (n * beta + lambda);
    let prefactor = 1.0 / lambda + 1.0 / (n * beta);

    let scaled: Vec<f64> = samples.totals.iter().map(|t| weight * t).collect();
    let log_z2 = logsumexp(&scaled)? - j.ln();
    let posterior_weights = softmax(&scaled)?;

    // Mean computed about the minimum so a degenerate (Dirac) prior sample
    // centers to exactly zero.
    let total_min = samples.totals.iter().cloned().fold(f64::INFINITY, f64::min);
    let total_mean =
        total_min + samples.totals.iter().map(|t| t - total_min).sum::<f64>() / j;
    let total_var = samples
        .totals
        .iter()
        .map(|t| (t - total_mean) * (t - total_mean))
        .sum::<f64>()
        / (j - 1.0).max(1.0);

    // Delta-method standard error of the log-sum-exp estimate.
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let us: Vec<f64> = scaled.iter().map(|s| (s - max).exp()).collect();
    let u_mean = us.iter().sum::<f64>() / j;
    let u_var = us.iter().map(|u| (u - u_mean) * (u - u_mean)).sum::<f64>() / (j - 1.0).max(1.0);
    let log_z2_se = u_var.sqrt() / (u_mean * j.sqrt());

    let pacoh = BoundReport::new(-prefactor * log_z2, 0.0, complexity, prefactor * log_z2_se);
    let per_task_se = (total_var / j).sqrt() / (n * beta);
    let per_task =
        BoundReport::new(-total_mean / (n * beta), 0.0, complexity, per_task_se);

    // Centered CGF form of the gap; algebraically equal to
    // per_task.total - pacoh.total under shared samples.
    let centered: Vec<f64> = samples.totals.iter().map(|t| weight * (t - total_mean)).collect();
    let delta_improvement = prefactor * (logsumexp(&centered)? - j.ln());
    let delta_std_error = pacoh.mc_std_error + per_task.mc_std_error;

    Ok(BoundSuite { pacoh, per_task, delta_improvement, delta_std_error, samples, posterior_weights })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{BlrEvidence, BlrModelConfig};
    use crate::envs::{gen_blr_env, BlrEnvConfig};
    use crate::numerics::DiagonalGaussian;

    fn toy_suite(
        hyper_std: f64,
        mc_priors: usize,
        seed: u64,
    ) -> BoundSuite<Vec<f64>> {
        let env = BlrEnvConfig {
            n_tasks: 6,
            samples_per_task: 5,
            dim: 2,
            test_tasks: 0,
            query_points: 1,
            ..Default::default()
        };
        let ds = gen_blr_env(&env, seed);
        let model = BlrEvidence {
            model: BlrModelConfig { prior_var: 0.04, likelihood_var: 1.0 },
            hyper: DiagonalGaussian::spherical(2, hyper_std),
        };
        let n = ds.train_tasks.len();
        let m = env.samples_per_task;
        let (lambda, beta) = ((n as f64).sqrt(), (m as f64).sqrt());
        let complexity = ComplexityTerms::from_parts(0.5, 0.2, n, 0.1).unwrap();
        evaluate_bounds(
            &model,
            &ds.train_tasks,
            lambda,
            beta,
            &complexity,
            mc_priors,
            &RngStream::new(seed, 7),
        )
        .unwrap()
    }

    #[test]
    fn gap_identity_under_shared_samples() {
        let suite = toy_suite(0.5, 400, 1);
        let direct = suite.per_task.total - suite.pacoh.total;
        assert!(
            (suite.delta_improvement - direct).abs() < 1e-10,
            "{} vs {direct}",
            suite.delta_improvement
        );
    }

    #[test]
    fn dirac_hyper_prior_gives_zero_gap() {
        let suite = toy_suite(0.0, 50, 2);
        assert_eq!(suite.delta_improvement, 0.0);
        assert!((suite.pacoh.total - suite.per_task.total).abs() < 1e-12);
    }

    #[test]
    fn gap_nonnegative_up_to_mc_noise() {
        for seed in 0..5 {
            let suite = toy_suite(0.6, 300, 10 + seed);
            assert!(
                suite.delta_improvement >= -3.0 * suite.delta_std_error,
                "seed {seed}: delta {} se {}",
                suite.delta_improvement,
                suite.delta_std_error
            );
        }
    }

    #[test]
    fn posterior_weights_normalized() {
        let suite = toy_suite(0.5, 128, 3);
        let sum: f64 = suite.posterior_weights.iter().sum();
        assert!((sum - 1.0).abs() < 1e-10);
    }

    #[test]
    fn per_task_stderr_shrinks_with_samples() {
        // Monte-Carlo scaling: quadrupling the samples roughly halves the
        // standard error.
        let se_small = toy_suite(0.5, 100, 4).per_task.mc_std_error;
        let se_large = toy_suite(0.5, 1600, 4).per_task.mc_std_error;
        let ratio = se_small / se_large;
        assert!(
            (2.0..8.0).contains(&ratio),
            "expected ~4x shrink, got ratio {ratio}"
        );
    }
}
