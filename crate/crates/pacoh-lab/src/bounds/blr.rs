//! Closed forms for the Bayesian-linear-regression case study: generalized
//! marginal likelihood, Gibbs posterior, CGF constants, and transfer error.

use serde::{Deserialize, Serialize};

use super::evaluate::EvidenceModel;
use super::{ComplexityTerms, PriorSampler};
use crate::envs::{BlrEnvConfig, TaskDataset, TaskMeta};
use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, DiagonalGaussian, RngStream, SpdSolver};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Fixed constants of the linear model: isotropic Gaussian prior variance
/// over weights and the likelihood variance of the quadratic loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrModelConfig {
    pub prior_var: f64,
    pub likelihood_var: f64,
}

fn design_terms(
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    likelihood_var: f64,
) -> (DenseMatrix, Vec<f64>, f64) {
    let (m, d) = (inputs.rows(), inputs.cols());
    let scale = beta / (m as f64 * likelihood_var);
    let mut a = DenseMatrix::zeros(d, d);
    let mut b = vec![0.0; d];
    let mut c = 0.0;
    for (row, &y) in inputs.row_iter().zip(targets) {
        for i in 0..d {
            for j in 0..d {
                a.set(i, j, a.get(i, j) + scale * row[i] * row[j]);
            }
            b[i] += scale * row[i] * y;
        }
        c += 0.5 * scale * y * y;
    }
    (a, b, c)
}

/// Generalized marginal log-likelihood of the linear-Gaussian model:
/// `log E_{w ~ N(mu, prior_var I)} exp(-(beta/m) Σ_j l(w, x_j, y_j))` with the
/// quadratic negative log-likelihood loss. An empty dataset yields 0.
pub fn blr_log_z(
    prior_mean: &[f64],
    prior_var: f64,
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    likelihood_var: f64,
) -> Result<f64> {
    Ok(blr_log_z_grad(prior_mean, prior_var, inputs, targets, beta, likelihood_var)?.0)
}

/// [`blr_log_z`] together with its gradient with respect to the prior mean.
pub fn blr_log_z_grad(
    prior_mean: &[f64],
    prior_var: f64,
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    likelihood_var: f64,
) -> Result<(f64, Vec<f64>)> {
    let d = prior_mean.len();
    if inputs.rows() == 0 {
        return Ok((0.0, vec![0.0; d]));
    }
    if inputs.cols() != d {
        return Err(Error::DimensionMismatch { expected: d, got: inputs.cols() });
    }
    let m = inputs.rows() as f64;
    let tau = 1.0 / prior_var;
    let (mut lam, b, c) = design_terms(inputs, targets, beta, likelihood_var);
    for i in 0..d {
        lam.set(i, i, lam.get(i, i) + tau);
    }
    let solver = SpdSolver::new(&lam)?;
    let eta: Vec<f64> = (0..d).map(|i| tau * prior_mean[i] + b[i]).collect();
    let mu_post = solver.solve(&eta);
    let quad_prior: f64 = prior_mean.iter().map(|v| tau * v * v).sum();
    let quad_post: f64 = eta.iter().zip(&mu_post).map(|(e, p)| e * p).sum();
    let log_det0 = d as f64 * tau.ln();
    let value = -0.5 * beta * (LOG_2PI + likelihood_var.ln()) - c
        - 0.5 * quad_prior
        + 0.5 * quad_post
        + 0.5 * (log_det0 - solver.log_det());
    let _ = m;
    let grad: Vec<f64> =
        mu_post.iter().zip(prior_mean).map(|(p, u)| tau * (p - u)).collect();
    Ok((value, grad))
}

/// Gibbs posterior of the linear model: Gaussian with the returned mean and
/// covariance.
pub fn blr_gibbs_posterior(
    prior_mean: &[f64],
    prior_var: f64,
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    likelihood_var: f64,
) -> Result<(Vec<f64>, DenseMatrix)> {
    let d = prior_mean.len();
    let tau = 1.0 / prior_var;
    let (mut lam, b, _) = design_terms(inputs, targets, beta, likelihood_var);
    for i in 0..d {
        lam.set(i, i, lam.get(i, i) + tau);
    }
    let solver = SpdSolver::new(&lam)?;
    let eta: Vec<f64> = (0..d).map(|i| tau * prior_mean[i] + b[i]).collect();
    let mean = solver.solve(&eta);
    let mut cov = DenseMatrix::zeros(d, d);
    let mut unit = vec![0.0; d];
    for j in 0..d {
        unit[j] = 1.0;
        let col = solver.solve(&unit);
        unit[j] = 0.0;
        for i in 0..d {
            cov.set(i, j, col[i]);
        }
    }
    Ok((mean, cov))
}

/// Per-task CGF constants of the linear-regression environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrCgf1 {
    /// Task hardness `theta = sigma_x² ||w*||² + sigma_eps²`.
    pub theta: f64,
    /// Scale parameter `c_i` (depends on `gamma = beta/m`).
    pub c: f64,
    /// Variance factor `s_i²`.
    pub s_sq: f64,
    gamma: f64,
}

impl BlrCgf1 {
    /// Data-level CGF contribution `gamma² s² / (2 (1 - gamma c))`, i.e. the
    /// per-sample bound; the per-task complexity term is `(m/beta)` times it.
    /// For `beta = sqrt(m)` this equals `s² / (2 (sqrt(m) - c))` per task.
    pub fn psi1_term(&self, m: usize) -> Result<f64> {
        let beta = m as f64 * self.gamma;
        let denom = 1.0 - self.gamma * self.c;
        if denom <= 0.0 {
            return Err(Error::OutOfValidityWindow(format!(
                "gamma {} outside (0, 1/c) with c = {}",
                self.gamma, self.c
            )));
        }
        Ok(beta * self.s_sq / (2.0 * m as f64 * denom))
    }
}

/// Environment-level CGF constants of the linear-regression environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlrCgf2 {
    pub c2: f64,
    pub s2_sq: f64,
}

impl BlrCgf2 {
    /// Task-level CGF bound `lambda s2² / (2 n (1 - c2 lambda / n))`; for
    /// `lambda = sqrt(n)` this is `s2² / (2 (sqrt(n) - c2))`.
    pub fn psi2_term(&self, n: usize, lambda: f64) -> Result<f64> {
        let nf = n as f64;
        let denom = 1.0 - self.c2 * lambda / nf;
        if denom <= 0.0 {
            return Err(Error::OutOfValidityWindow(format!(
                "lambda {lambda} >= n/c2 = {}",
                nf / self.c2
            )));
        }
        Ok(lambda * self.s2_sq / (2.0 * nf * denom))
    }
}

/// Per-task sub-gamma constants for the linear-regression loss at
/// `gamma = beta / m`:
///
/// `theta = sigma_x² ||w*||² + sigma_eps²`
/// `c = (d/sigma²) sigma_x² (sigma_P² + sigma_HP²) (1 + gamma theta / sigma²) - theta/sigma²`
/// `s² = (theta/sigma²)(1/gamma - c) + c/gamma`
///
/// Errors with [`Error::OutOfValidityWindow`] when `gamma` lies outside
/// `(0, 1/c)`.
#[allow(clippy::too_many_arguments)]
pub fn blr_cgf_constants(
    w_star: &[f64],
    sigma_sq: f64,
    sigma_x_sq: f64,
    prior_var: f64,
    hyper_var: f64,
    noise_var: f64,
    gamma: f64,
) -> Result<BlrCgf1> {
    if gamma <= 0.0 {
        return Err(Error::InvalidConfig("gamma must be positive".into()));
    }
    let d = w_star.len() as f64;
    let w_norm_sq: f64 = w_star.iter().map(|w| w * w).sum();
    let theta = sigma_x_sq * w_norm_sq + noise_var;
    let pooled = prior_var + hyper_var;
    let c = d / sigma_sq * sigma_x_sq * pooled
        + gamma / (sigma_sq * sigma_sq) * d * sigma_x_sq * pooled * theta
        - theta / sigma_sq;
    if c > 0.0 && gamma >= 1.0 / c {
        return Err(Error::OutOfValidityWindow(format!(
            "gamma {gamma} outside (0, 1/c) with c = {c}"
        )));
    }
    let s_sq = theta / sigma_sq * (1.0 / gamma - c) + c / gamma;
    Ok(BlrCgf1 { theta, c, s_sq, gamma })
}

/// Environment-level sub-gamma constants:
/// `c2 = (sigma_x²/sigma²)(sigma_HP² + sigma_T²)`,
/// `s2² = (sigma_x²/sigma²) c2 ||mu_T||² + d c2²`.
pub fn blr_cgf2_constants(
    mu_t: &[f64],
    sigma_t_sq: f64,
    hyper_var: f64,
    sigma_x_sq: f64,
    sigma_sq: f64,
) -> BlrCgf2 {
    let d = mu_t.len() as f64;
    let mu_norm_sq: f64 = mu_t.iter().map(|v| v * v).sum();
    let c2 = sigma_x_sq / sigma_sq * (hyper_var + sigma_t_sq);
    let s2_sq = sigma_x_sq / sigma_sq * c2 * mu_norm_sq + d * c2 * c2;
    BlrCgf2 { c2, s2_sq }
}

/// Full complexity term for a linear-regression environment with the
/// `lambda = sqrt(n), beta = sqrt(m)` temperatures: per-task CGF terms are
/// averaged over the tasks' true weights.
#[allow(clippy::too_many_arguments)]
pub fn blr_complexity(
    tasks: &[TaskDataset],
    env: &BlrEnvConfig,
    model: &BlrModelConfig,
    hyper_var: f64,
    m: usize,
    delta: f64,
) -> Result<ComplexityTerms> {
    let n = tasks.len();
    let gamma = 1.0 / (m as f64).sqrt();
    let mut psi1 = 0.0;
    for task in tasks {
        let w_star = match &task.meta {
            Some(TaskMeta::LinearWeights(w)) => w,
            _ => {
                return Err(Error::InvalidConfig(
                    "task carries no true linear weights".into(),
                ))
            }
        };
        let cgf = blr_cgf_constants(
            w_star,
            model.likelihood_var,
            env.input_std * env.input_std,
            model.prior_var,
            hyper_var,
            env.noise_std * env.noise_std,
            gamma,
        )?;
        psi1 += cgf.psi1_term(m)?;
    }
    psi1 /= n as f64;
    let mu_t = vec![env.task_mean; env.dim];
    let cgf2 = blr_cgf2_constants(
        &mu_t,
        env.task_std * env.task_std,
        hyper_var,
        env.input_std * env.input_std,
        model.likelihood_var,
    );
    let psi2 = cgf2.psi2_term(n, (n as f64).sqrt())?;
    ComplexityTerms::from_parts(psi1, psi2, n, delta)
}

/// Evidence model for the bound estimators: priors are the Gaussian family
/// over the linear weights' mean, drawn from a spherical hyper distribution.
pub struct BlrEvidence {
    pub model: BlrModelConfig,
    pub hyper: DiagonalGaussian,
}

impl EvidenceModel for BlrEvidence {
    type Prior = Vec<f64>;

    fn sample_prior(&self, rng: &mut RngStream) -> Vec<f64> {
        self.hyper.sample(rng)
    }

    fn log_z(
        &self,
        prior: &Vec<f64>,
        task: &TaskDataset,
        beta: f64,
        _rng: &mut RngStream,
    ) -> Result<f64> {
        blr_log_z(
            prior,
            self.model.prior_var,
            &task.inputs,
            &task.targets,
            beta,
            self.model.likelihood_var,
        )
    }
}

/// Closed-form expected Gibbs error (negative log-likelihood transfer error)
/// of the linear model on freshly sampled test tasks, under priors drawn
/// from `sampler`. Returns `(mean, standard error over tasks)`.
#[allow(clippy::too_many_arguments)]
pub fn blr_transfer_error(
    sampler: &PriorSampler<'_>,
    env: &BlrEnvConfig,
    model: &BlrModelConfig,
    beta: f64,
    test_tasks: &[TaskDataset],
    priors_per_task: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if test_tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    let sigma_x_sq = env.input_std * env.input_std;
    let noise_var = env.noise_std * env.noise_std;
    let s2 = model.likelihood_var;
    let mut per_task = Vec::with_capacity(test_tasks.len());
    for task in test_tasks {
        let w_star = match &task.meta {
            Some(TaskMeta::LinearWeights(w)) => w.clone(),
            _ => return Err(Error::InvalidConfig("test task lacks true weights".into())),
        };
        let mut task_rng = rng.fork(task.task_id);
        let err = sampler.expect(priors_per_task, &mut task_rng, |prior_mean| {
            let (mu_q, cov) = blr_gibbs_posterior(
                prior_mean,
                model.prior_var,
                &task.inputs,
                &task.targets,
                beta,
                s2,
            )
            .expect("posterior precision is SPD");
            let trace: f64 = (0..cov.rows()).map(|i| cov.get(i, i)).sum();
            let dist_sq: f64 =
                mu_q.iter().zip(&w_star).map(|(a, b)| (a - b) * (a - b)).sum();
            0.5 * (LOG_2PI + s2.ln())
                + (sigma_x_sq * (dist_sq + trace) + noise_var) / (2.0 * s2)
        });
        per_task.push(err);
    }
    let n = per_task.len() as f64;
    let mean = per_task.iter().sum::<f64>() / n;
    let var = per_task.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::logsumexp;

    fn toy_inputs(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn empty_dataset_gives_zero() {
        let inputs = DenseMatrix::zeros(0, 2);
        let v = blr_log_z(&[0.3, -0.1], 0.5, &inputs, &[], 2.0, 0.2).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn near_dirac_prior_is_point_loss() {
        let inputs = toy_inputs(&[vec![0.5, 1.0], vec![-0.2, 0.3]]);
        let targets = [0.4, 0.1];
        let mu = [0.6, -0.3];
        let (beta, s2) = (2.0, 0.25);
        let v = blr_log_z(&mu, 1e-12, &inputs, &targets, beta, s2).unwrap();
        // Empirical loss at the prior mean.
        let mut loss = 0.0;
        sum_point_losses(&inputs, &targets, &mu, s2, |l| loss += l);
        loss /= 2.0;
        assert!((v - (-beta * loss)).abs() < 1e-3, "{v} vs {}", -beta * loss);
    }

    fn sum_point_losses(
        inputs: &DenseMatrix,
        targets: &[f64],
        w: &[f64],
        s2: f64,
        mut f: impl FnMut(f64),
    ) {
        for (row, &y) in inputs.row_iter().zip(targets) {
            let pred: f64 = row.iter().zip(w).map(|(a, b)| a * b).sum();
            f(0.5 * (2.0 * std::f64::consts::PI * s2).ln() + (y - pred) * (y - pred) / (2.0 * s2));
        }
    }

    #[test]
    fn matches_importance_sampling_oracle() {
        let mut rng = RngStream::new(91, 0);
        let inputs = toy_inputs(&[vec![0.4, -1.0], vec![1.2, 0.3], vec![-0.6, 0.8]]);
        let targets = [0.2, -0.5, 0.9];
        let mu = [0.25, -0.15];
        let (prior_var, beta, s2) = (0.36, 3.0f64.sqrt(), 0.3);
        let exact = blr_log_z(&mu, prior_var, &inputs, &targets, beta, s2).unwrap();
        let draws = 200_000;
        let mut log_terms = Vec::with_capacity(draws);
        for _ in 0..draws {
            let w: Vec<f64> =
                mu.iter().map(|m| m + prior_var.sqrt() * rng.normal()).collect();
            let mut loss = 0.0;
            sum_point_losses(&inputs, &targets, &w, s2, |l| loss += l);
            loss /= 3.0;
            log_terms.push(-beta * loss);
        }
        let estimate = logsumexp(&log_terms).unwrap() - (draws as f64).ln();
        // Delta-method standard error of the LSE estimator.
        let max = log_terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let us: Vec<f64> = log_terms.iter().map(|t| (t - max).exp()).collect();
        let um = us.iter().sum::<f64>() / draws as f64;
        let uv = us.iter().map(|u| (u - um) * (u - um)).sum::<f64>() / draws as f64;
        let se = uv.sqrt() / (um * (draws as f64).sqrt());
        assert!(
            (exact - estimate).abs() < 3.0 * se,
            "closed form {exact} vs MC {estimate} (se {se})"
        );
    }

    #[test]
    fn grad_matches_finite_differences() {
        let inputs = toy_inputs(&[vec![0.4, -1.0], vec![1.2, 0.3]]);
        let targets = [0.2, -0.5];
        let mu = [0.25, -0.15];
        let (_, grad) = blr_log_z_grad(&mu, 0.5, &inputs, &targets, 1.4, 0.3).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut mp = mu;
            let mut mm = mu;
            mp[i] += h;
            mm[i] -= h;
            let fd = (blr_log_z(&mp, 0.5, &inputs, &targets, 1.4, 0.3).unwrap()
                - blr_log_z(&mm, 0.5, &inputs, &targets, 1.4, 0.3).unwrap())
                / (2.0 * h);
            assert!((grad[i] - fd).abs() < 1e-7);
        }
    }

    #[test]
    fn cgf1_zero_signal_task() {
        let cgf = blr_cgf_constants(&[0.0; 5], 1.0, 1.0, 0.04, 0.25, 1.0 / 9.0, 0.1).unwrap();
        assert!((cgf.theta - 1.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn cgf1_reference_tuple_unit_likelihood_var() {
        // Reference setting: d=5, sigma_x²=1, sigma_P²=1/25, sigma_HP²=1/4,
        // sigma_eps=1/3, sigma²=1, ||w*||²=0.2, m=5. Digits from an
        // independent script.
        let w_star = [0.2; 5];
        let gamma = 1.0 / 5.0f64.sqrt();
        let cgf =
            blr_cgf_constants(&w_star, 1.0, 1.0, 1.0 / 25.0, 0.25, 1.0 / 9.0, gamma).unwrap();
        assert!((cgf.theta - 0.311_111_111_111_111_1).abs() < 1e-14);
        assert!((cgf.c - 1.340_631_910_858_869_9).abs() < 1e-12);
        assert!((cgf.s_sq - 3.276_324_195_107_491).abs() < 1e-12);
        let term = cgf.psi1_term(5).unwrap();
        assert!((term - 1.829_457_354_447_47).abs() < 1e-12);
    }

    #[test]
    fn cgf1_well_specified_likelihood_var_is_out_of_window_at_m5() {
        // With sigma² = sigma_eps² = 1/9 the scale constant c ≈ 26.6 exceeds
        // 1/gamma = sqrt(5), so the sub-gamma window is empty.
        let w_star = [0.2; 5];
        let gamma = 1.0 / 5.0f64.sqrt();
        let res =
            blr_cgf_constants(&w_star, 1.0 / 9.0, 1.0, 1.0 / 25.0, 0.25, 1.0 / 9.0, gamma);
        assert!(matches!(res, Err(Error::OutOfValidityWindow(_))));
    }

    #[test]
    fn cgf1_term_decreases_in_m() {
        let w_star = [0.2; 5];
        let mut prev = f64::INFINITY;
        for m in [5usize, 10, 20, 40] {
            let gamma = 1.0 / (m as f64).sqrt();
            let cgf =
                blr_cgf_constants(&w_star, 1.0, 1.0, 1.0 / 25.0, 0.25, 1.0 / 9.0, gamma)
                    .unwrap();
            let term = cgf.psi1_term(m).unwrap();
            assert!(term > 0.0 && term < prev, "m={m}: {term} !< {prev}");
            prev = term;
        }
    }

    #[test]
    fn cgf2_degenerate_environment() {
        let cgf = blr_cgf2_constants(&[], 0.0, 0.25, 1.0, 1.0);
        assert_eq!(cgf.s2_sq, 0.0);
        assert_eq!(cgf.psi2_term(16, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn cgf2_reference_tuple() {
        // d=5, mu_T=0.2·1, sigma_T=0.1, sigma_HP²=1/4, sigma_x²=1, sigma²=1/9.
        let cgf = blr_cgf2_constants(&[0.2; 5], 0.01, 0.25, 1.0, 1.0 / 9.0);
        assert!((cgf.c2 - 2.34).abs() < 1e-12);
        assert!((cgf.s2_sq - 31.59).abs() < 1e-10);
        let term = cgf.psi2_term(16, 4.0).unwrap();
        assert!((term - 9.515_060_240_963_855).abs() < 1e-10);
    }

    #[test]
    fn cgf2_term_decreases_in_n() {
        let cgf = blr_cgf2_constants(&[0.2; 5], 0.01, 0.25, 1.0, 1.0 / 9.0);
        let mut prev = f64::INFINITY;
        for n in [16usize, 64, 256] {
            let term = cgf.psi2_term(n, (n as f64).sqrt()).unwrap();
            assert!(term > 0.0 && term < prev);
            prev = term;
        }
    }

    #[test]
    fn gibbs_posterior_matches_conjugate_formula() {
        let inputs = toy_inputs(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]);
        let targets = [0.5, -0.2, 0.4];
        let (prior_var, s2) = (0.5, 0.2);
        let beta = 3.0; // = m, the Bayesian case
        let (mean, cov) =
            blr_gibbs_posterior(&[0.0, 0.0], prior_var, &inputs, &targets, beta, s2).unwrap();
        // Dense conjugate computation.
        let mut a = [[1.0 / prior_var, 0.0], [0.0, 1.0 / prior_var]];
        let mut b = [0.0, 0.0];
        for (row, &y) in inputs.row_iter().zip(&targets) {
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] += row[i] * row[j] / s2;
                }
                b[i] += row[i] * y / s2;
            }
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        let want = [
            inv[0][0] * b[0] + inv[0][1] * b[1],
            inv[1][0] * b[0] + inv[1][1] * b[1],
        ];
        for i in 0..2 {
            assert!((mean[i] - want[i]).abs() < 1e-10);
            for j in 0..2 {
                assert!((cov.get(i, j) - inv[i][j]).abs() < 1e-10);
            }
        }
    }
}
