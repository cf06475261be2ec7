//! Bayesian-neural-network base learner: diagonal Gaussian priors over
//! network weights, negative log-likelihood losses, and the numerically
//! stable log-sum-exp estimator of the generalized marginal log-likelihood
//! together with its reparametrized score gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{mlp_backward, mlp_forward_traced, MlpArchitecture};
use crate::numerics::{logsumexp, softmax, DenseMatrix, DiagonalGaussian, RngStream};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Per-sample losses above this value are clamped before entering the LSE,
/// so a diverged particle cannot poison the estimate with infinities.
const LOSS_CAP: f64 = 1e6;

/// Observation model attached to the network output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// Gaussian regression likelihood; `log sigma` is part of the hypothesis,
    /// learned alongside the weights. The prior over that coordinate is
    /// centered at `noise_prior_mean_log` under the hyper-prior.
    GaussianLearned { noise_prior_mean_log: f64 },
    /// Gaussian regression likelihood with fixed noise standard deviation.
    GaussianFixed { sigma: f64 },
    /// Softmax-categorical likelihood over `classes` logits.
    Categorical { classes: usize },
}

/// Network architecture plus observation model. A hypothesis is the flat
/// weight vector, extended by one `log sigma` coordinate for
/// [`Likelihood::GaussianLearned`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnnConfig {
    pub arch: MlpArchitecture,
    pub likelihood: Likelihood,
}

impl BnnConfig {
    pub fn regression(arch: MlpArchitecture) -> Self {
        Self { arch, likelihood: Likelihood::GaussianLearned { noise_prior_mean_log: 0.1f64.ln() } }
    }

    /// Hypothesis dimension: network parameters plus the learned-noise slot.
    pub fn hypothesis_dim(&self) -> usize {
        self.arch.param_count()
            + match self.likelihood {
                Likelihood::GaussianLearned { .. } => 1,
                _ => 0,
            }
    }

    /// Prior-parameter dimension: mean and log-std per hypothesis coordinate.
    pub fn phi_dim(&self) -> usize {
        2 * self.hypothesis_dim()
    }

    /// Interprets `phi = (mu_P, log sigma_P)` as a diagonal Gaussian prior
    /// over hypotheses.
    pub fn prior_from_phi(&self, phi: &[f64]) -> Result<DiagonalGaussian> {
        let h = self.hypothesis_dim();
        if phi.len() != 2 * h {
            return Err(Error::DimensionMismatch { expected: 2 * h, got: phi.len() });
        }
        DiagonalGaussian::new(phi[..h].to_vec(), phi[h..].to_vec())
    }

    /// Zero-centered spherical hyper-prior over `phi`, with the mean of the
    /// noise coordinate shifted to the configured prior location.
    pub fn hyper_prior(&self, std: f64) -> DiagonalGaussian {
        let mut hp = DiagonalGaussian::spherical(self.phi_dim(), std);
        if let Likelihood::GaussianLearned { noise_prior_mean_log } = self.likelihood {
            let h = self.hypothesis_dim();
            hp.mean[h - 1] = noise_prior_mean_log;
        }
        hp
    }

    fn weights<'a>(&self, h: &'a [f64]) -> &'a [f64] {
        &h[..self.arch.param_count()]
    }

    /// Network output at `x` for hypothesis `h`.
    pub fn predict(&self, h: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        Ok(mlp_forward_traced(&self.arch, self.weights(h), x)?.output().to_vec())
    }

    /// Observation noise standard deviation encoded in `h` (regression only).
    pub fn noise_std(&self, h: &[f64]) -> f64 {
        match self.likelihood {
            Likelihood::GaussianLearned { .. } => h[self.hypothesis_dim() - 1].exp(),
            Likelihood::GaussianFixed { sigma } => sigma,
            Likelihood::Categorical { .. } => 0.0,
        }
    }
}

fn nll_loss_raw(cfg: &BnnConfig, h: &[f64], x: &[f64], y: f64) -> Result<f64> {
    let out = mlp_forward_traced(&cfg.arch, cfg.weights(h), x)?;
    let out = out.output();
    let loss = match cfg.likelihood {
        Likelihood::GaussianLearned { .. } | Likelihood::GaussianFixed { .. } => {
            let sigma = cfg.noise_std(h);
            let r = y - out[0];
            sigma.ln() + 0.5 * LOG_2PI + r * r / (2.0 * sigma * sigma)
        }
        Likelihood::Categorical { classes } => {
            if out.len() != classes {
                return Err(Error::DimensionMismatch { expected: classes, got: out.len() });
            }
            let lse = logsumexp(out)?;
            lse - out[y as usize]
        }
    };
    Ok(loss)
}

/// Negative log-likelihood of one observation under hypothesis `h`.
pub fn nll_loss(cfg: &BnnConfig, h: &[f64], x: &[f64], y: f64) -> Result<f64> {
    let loss = nll_loss_raw(cfg, h, x, y)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("nll loss".into()));
    }
    Ok(loss)
}

/// Loss and its gradient with respect to the hypothesis vector.
pub fn nll_loss_grad(cfg: &BnnConfig, h: &[f64], x: &[f64], y: f64) -> Result<(f64, Vec<f64>)> {
    let weights = cfg.weights(h);
    let trace = mlp_forward_traced(&cfg.arch, weights, x)?;
    let out = trace.output().to_vec();
    let mut grad = vec![0.0; cfg.hypothesis_dim()];
    let loss = match cfg.likelihood {
        Likelihood::GaussianLearned { .. } | Likelihood::GaussianFixed { .. } => {
            let sigma = cfg.noise_std(h);
            let var = sigma * sigma;
            let r = y - out[0];
            let upstream = [-r / var];
            let (gw, _) = mlp_backward(&cfg.arch, weights, &trace, &upstream)?;
            grad[..gw.len()].copy_from_slice(&gw);
            if matches!(cfg.likelihood, Likelihood::GaussianLearned { .. }) {
                // d/d log sigma [log sigma + r²/(2 sigma²)] = 1 − r²/sigma²
                grad[cfg.hypothesis_dim() - 1] = 1.0 - r * r / var;
            }
            sigma.ln() + 0.5 * LOG_2PI + r * r / (2.0 * var)
        }
        Likelihood::Categorical { classes } => {
            let lse = logsumexp(&out)?;
            let probs: Vec<f64> = out.iter().map(|o| (o - lse).exp()).collect();
            let mut upstream = probs.clone();
            upstream[y as usize] -= 1.0;
            let (gw, _) = mlp_backward(&cfg.arch, weights, &trace, &upstream)?;
            grad[..gw.len()].copy_from_slice(&gw);
            let _ = classes;
            lse - out[y as usize]
        }
    };
    Ok((loss, grad))
}

/// Mean loss over a dataset.
pub fn empirical_loss(
    cfg: &BnnConfig,
    h: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
) -> Result<f64> {
    let m = inputs.rows();
    if m == 0 || targets.len() != m {
        return Err(Error::LengthMismatch { left: m, right: targets.len() });
    }
    let mut acc = 0.0;
    for (row, &y) in inputs.row_iter().zip(targets) {
        acc += nll_loss_raw(cfg, h, row, y)?;
    }
    Ok(acc / m as f64)
}

fn empirical_loss_grad(
    cfg: &BnnConfig,
    h: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let m = inputs.rows() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; cfg.hypothesis_dim()];
    for (row, &y) in inputs.row_iter().zip(targets) {
        let (l, g) = nll_loss_grad(cfg, h, row, y)?;
        loss += l;
        for (dst, gi) in grad.iter_mut().zip(&g) {
            *dst += gi;
        }
    }
    for g in &mut grad {
        *g /= m;
    }
    Ok((loss / m, grad))
}

/// Monte-Carlo estimate of the generalized marginal log-likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MllEstimate {
    /// `LSE_l(-beta * loss_l) - log L`
    pub value: f64,
    /// Per-sample empirical losses, one per drawn hypothesis.
    pub per_sample_losses: Vec<f64>,
    /// Softmax weights of `-beta * loss_l`; they sum to one.
    pub softmax_weights: Vec<f64>,
}

fn clamp_loss(l: f64) -> f64 {
    if l.is_finite() {
        l.min(LOSS_CAP)
    } else {
        LOSS_CAP
    }
}

/// LSE estimate of `log Z_beta(S, P_phi)` from `samples` reparametrized prior
/// draws. Identical `rng` state reproduces identical draws, so the paired
/// gradient call below can share them.
pub fn mll_estimate_lse(
    cfg: &BnnConfig,
    phi: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<MllEstimate> {
    let (estimate, _) = mll_lse_inner(cfg, phi, inputs, targets, beta, samples, rng, false)?;
    Ok(estimate)
}

/// LSE estimate together with its gradient with respect to
/// `phi = (mu_P, log sigma_P)`; shares the prior draws with the estimate.
pub fn mll_with_grad_lse(
    cfg: &BnnConfig,
    phi: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<(MllEstimate, Vec<f64>)> {
    let (estimate, grad) = mll_lse_inner(cfg, phi, inputs, targets, beta, samples, rng, true)?;
    Ok((estimate, grad.expect("gradient requested")))
}

#[allow(clippy::too_many_arguments)]
fn mll_lse_inner(
    cfg: &BnnConfig,
    phi: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
    beta: f64,
    samples: usize,
    rng: &mut RngStream,
    want_grad: bool,
) -> Result<(MllEstimate, Option<Vec<f64>>)> {
    if samples == 0 {
        return Err(Error::InvalidConfig("need at least one prior sample".into()));
    }
    if beta <= 0.0 {
        return Err(Error::InvalidConfig("beta must be positive".into()));
    }
    let prior = cfg.prior_from_phi(phi)?;
    let hdim = cfg.hypothesis_dim();

    let mut eps = Vec::with_capacity(samples);
    let mut losses = Vec::with_capacity(samples);
    let mut loss_grads: Vec<Vec<f64>> = Vec::with_capacity(samples);
    for l in 0..samples {
        let mut draw_rng = rng.fork(l as u64);
        let e = draw_rng.normal_vec(hdim);
        let theta = prior.transport(&e);
        if want_grad {
            match empirical_loss_grad(cfg, &theta, inputs, targets) {
                Ok((loss, grad)) if loss.is_finite() && loss < LOSS_CAP => {
                    losses.push(loss);
                    loss_grads.push(grad);
                }
                _ => {
                    losses.push(LOSS_CAP);
                    loss_grads.push(vec![0.0; hdim]);
                }
            }
        } else {
            let loss = empirical_loss(cfg, &theta, inputs, targets)
                .map(clamp_loss)
                .unwrap_or(LOSS_CAP);
            losses.push(clamp_loss(loss));
        }
        eps.push(e);
    }

    let scaled: Vec<f64> = losses.iter().map(|&l| -beta * l).collect();
    let value = logsumexp(&scaled)? - (samples as f64).ln();
    let weights = softmax(&scaled)?;
    let estimate =
        MllEstimate { value, per_sample_losses: losses, softmax_weights: weights.clone() };

    if !want_grad {
        return Ok((estimate, None));
    }

    // grad = -beta Σ_l w_l (d theta_l / d phi)ᵀ ∇_theta loss_l with
    // theta_l = mu + sigma ⊙ eps_l.
    let mut grad = vec![0.0; 2 * hdim];
    for l in 0..samples {
        let coeff = -beta * weights[l];
        if coeff == 0.0 {
            continue;
        }
        for i in 0..hdim {
            let g = loss_grads[l][i];
            grad[i] += coeff * g;
            grad[hdim + i] += coeff * g * prior.std(i) * eps[l][i];
        }
    }
    Ok((estimate, Some(grad)))
}
