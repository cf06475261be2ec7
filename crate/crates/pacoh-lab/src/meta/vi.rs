//! Variational-inference objective for the hyper-posterior: a diagonal
//! Gaussian family fit by minimizing the KL divergence to the optimal
//! hyper-posterior, estimated pathwise with the reparametrization trick.

use super::ScoreModel;
use crate::envs::TaskDataset;
use crate::error::{Error, Result};
use crate::numerics::{DiagonalGaussian, RngStream};

/// Estimates the VI objective
///
/// `J(υ) = -E_{φ~Q_υ}[ (m̃/(m̃+1)) Σ_i (1/m_i) log Z(S_i, P_φ) + η_t (log P(φ) - log Q_υ(φ)) ]`
///
/// and its exact gradient with respect to `υ = (μ_Q, log σ_Q)` for the drawn
/// noise (common random numbers), using `k_samples` reparametrized samples.
/// `batch` pairs each (possibly point-subsampled) task with its full size
/// `m_i`; `full_sizes` holds every task's size for the harmonic mean and the
/// mini-batch scale. `tempering` is the KL weight `η_t ∈ (0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn vi_objective_and_grad<M: ScoreModel + ?Sized>(
    model: &M,
    upsilon: &[f64],
    batch: &[(&TaskDataset, f64)],
    full_sizes: &[usize],
    hyper_prior: &DiagonalGaussian,
    tempering: f64,
    k_samples: usize,
    rng: &RngStream,
) -> Result<(f64, Vec<f64>)> {
    let dim = model.phi_dim();
    if upsilon.len() != 2 * dim {
        return Err(Error::DimensionMismatch { expected: 2 * dim, got: upsilon.len() });
    }
    if k_samples == 0 {
        return Err(Error::InvalidConfig("need at least one VI sample".into()));
    }
    let (mu_q, log_std_q) = upsilon.split_at(dim);
    let q = DiagonalGaussian::new(mu_q.to_vec(), log_std_q.to_vec())?;

    let n_total = full_sizes.len() as f64;
    let harmonic =
        n_total / full_sizes.iter().map(|&m| 1.0 / m as f64).sum::<f64>();
    let size_weight = harmonic / (harmonic + 1.0);
    let batch_scale = if batch.is_empty() { 0.0 } else { n_total / batch.len() as f64 };

    let mut objective = 0.0;
    let mut grad = vec![0.0; 2 * dim];
    for k in 0..k_samples {
        let mut eps_rng = rng.fork(k as u64);
        let eps = eps_rng.normal_vec(dim);
        let phi = q.transport(&eps);

        // Data term and its phi-gradient.
        let mut data = 0.0;
        let mut data_grad = vec![0.0; dim];
        for (task, m_full) in batch {
            let w = batch_scale * size_weight / m_full;
            let mut task_rng = rng.fork(task.task_id ^ 0x71aa);
            let (z, gz) = model.log_z(&phi, task, *m_full, &mut task_rng)?;
            data += w * z;
            for (dst, g) in data_grad.iter_mut().zip(&gz) {
                *dst += w * g;
            }
        }

        let prior = hyper_prior.log_pdf(&phi)?;
        let prior_grad = hyper_prior.grad_log_pdf(&phi)?;
        // log Q_υ(φ_k) at φ_k = μ + σ ⊙ ε reduces to -Σ log σ - ||ε||²/2 + const,
        // so its υ-gradient is 0 for μ and -1 per log σ coordinate.
        let log_q = q.log_pdf(&phi)?;

        objective += -(data + tempering * (prior - log_q));
        for i in 0..dim {
            let path = data_grad[i] + tempering * prior_grad[i];
            grad[i] += -path;
            grad[dim + i] += -(path * q.std(i) * eps[i] + tempering);
        }
    }
    let scale = 1.0 / k_samples as f64;
    objective *= scale;
    for g in &mut grad {
        *g *= scale;
    }
    if !objective.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::DivergenceDetected("VI objective is non-finite".into()));
    }
    Ok((objective, grad))
}
