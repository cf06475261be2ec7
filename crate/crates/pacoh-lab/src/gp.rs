//! Gaussian-process base learner with a learnable neural mean function and a
//! neural feature-map kernel: closed-form marginal log-likelihood, its exact
//! gradient with respect to the prior parameters, and posterior prediction.
//!
//! The kernel is a squared exponential on top of a feature map,
//! `k(x, x') = 0.5 * exp(-||f(x) - f(x')||²)`, so `k(x, x) = 0.5` always.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{mlp_backward, mlp_forward, mlp_forward_traced, MlpArchitecture};
use crate::numerics::{sq_dist, DenseMatrix, SpdSolver};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Architecture and fixed hyperparameters of the GP prior family. The prior
/// parameter vector `phi` is the concatenation of the mean-net and
/// feature-net flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    pub mean_arch: MlpArchitecture,
    pub feature_arch: MlpArchitecture,
    /// Observation noise variance added to the kernel diagonal.
    pub noise_variance: f64,
}

impl GpConfig {
    /// Default nets: 4 hidden layers of 32 tanh units; 2-d feature map.
    pub fn with_default_nets(input_dim: usize, noise_variance: f64) -> Self {
        Self {
            mean_arch: MlpArchitecture::new(input_dim, vec![32; 4], 1).expect("valid arch"),
            feature_arch: MlpArchitecture::new(input_dim, vec![32; 4], 2).expect("valid arch"),
            noise_variance,
        }
    }

    pub fn phi_dim(&self) -> usize {
        self.mean_arch.param_count() + self.feature_arch.param_count()
    }

    pub fn split_phi<'a>(&self, phi: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if phi.len() != self.phi_dim() {
            return Err(Error::DimensionMismatch { expected: self.phi_dim(), got: phi.len() });
        }
        Ok(phi.split_at(self.mean_arch.param_count()))
    }

    pub fn mean_value(&self, phi: &[f64], x: &[f64]) -> Result<f64> {
        let (mp, _) = self.split_phi(phi)?;
        Ok(mlp_forward(&self.mean_arch, mp, x)?[0])
    }

    pub fn features(&self, phi: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        let (_, fp) = self.split_phi(phi)?;
        mlp_forward(&self.feature_arch, fp, x)
    }
}

/// Gaussian posterior predictive at a single query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpPredictive {
    pub mean: f64,
    /// Includes the observation noise variance.
    pub variance: f64,
}

/// Kernel value between two inputs under prior parameters `phi`.
pub fn gp_kernel(cfg: &GpConfig, phi: &[f64], x: &[f64], x2: &[f64]) -> Result<f64> {
    let fa = cfg.features(phi, x)?;
    let fb = cfg.features(phi, x2)?;
    Ok(0.5 * (-sq_dist(&fa, &fb)).exp())
}

struct GramParts {
    features: Vec<Vec<f64>>,
    kernel: DenseMatrix,
    residual: Vec<f64>,
    solver: SpdSolver,
    alpha: Vec<f64>,
}

fn gram_parts(cfg: &GpConfig, phi: &[f64], inputs: &DenseMatrix, targets: &[f64]) -> Result<GramParts> {
    let m = inputs.rows();
    if m == 0 || targets.len() != m {
        return Err(Error::LengthMismatch { left: m, right: targets.len() });
    }
    let (mean_p, feat_p) = cfg.split_phi(phi)?;
    let mut features = Vec::with_capacity(m);
    let mut mean = Vec::with_capacity(m);
    for row in inputs.row_iter() {
        features.push(mlp_forward(&cfg.feature_arch, feat_p, row)?);
        mean.push(mlp_forward(&cfg.mean_arch, mean_p, row)?[0]);
    }
    let mut kernel = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let k = 0.5 * (-sq_dist(&features[i], &features[j])).exp();
            kernel.set(i, j, k);
            kernel.set(j, i, k);
        }
    }
    let mut shifted = kernel.clone();
    for i in 0..m {
        shifted.set(i, i, shifted.get(i, i) + cfg.noise_variance);
    }
    let solver = SpdSolver::new(&shifted)?;
    let residual: Vec<f64> = targets.iter().zip(&mean).map(|(y, m)| y - m).collect();
    let alpha = solver.solve(&residual);
    Ok(GramParts { features, kernel, residual, solver, alpha })
}

/// Marginal log-likelihood `log p(y | X, phi)` of the GP prior.
pub fn gp_mll(cfg: &GpConfig, phi: &[f64], inputs: &DenseMatrix, targets: &[f64]) -> Result<f64> {
    let parts = gram_parts(cfg, phi, inputs, targets)?;
    let m = inputs.rows() as f64;
    let quad: f64 = parts.residual.iter().zip(&parts.alpha).map(|(r, a)| r * a).sum();
    Ok(-0.5 * quad - 0.5 * parts.solver.log_det() - 0.5 * m * LOG_2PI)
}

/// Marginal log-likelihood and its exact gradient with respect to `phi`.
pub fn gp_mll_grad(
    cfg: &GpConfig,
    phi: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let parts = gram_parts(cfg, phi, inputs, targets)?;
    let m = inputs.rows();
    let quad: f64 = parts.residual.iter().zip(&parts.alpha).map(|(r, a)| r * a).sum();
    let value = -0.5 * quad - 0.5 * parts.solver.log_det() - 0.5 * m as f64 * LOG_2PI;

    // W = d mll / d K̃ = 0.5 (α αᵀ − K̃⁻¹), computed column by column.
    let mut ktilde_inv = DenseMatrix::zeros(m, m);
    let mut unit = vec![0.0; m];
    for j in 0..m {
        unit[j] = 1.0;
        let col = parts.solver.solve(&unit);
        unit[j] = 0.0;
        for i in 0..m {
            ktilde_inv.set(i, j, col[i]);
        }
    }
    let mut w = DenseMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            w.set(i, j, 0.5 * (parts.alpha[i] * parts.alpha[j] - ktilde_inv.get(i, j)));
        }
    }

    let (mean_p, feat_p) = cfg.split_phi(phi)?;
    let mut grad = vec![0.0; phi.len()];
    let feat_dim = cfg.feature_arch.output_dim;
    let mean_len = cfg.mean_arch.param_count();

    for p in 0..m {
        let x = inputs.row(p);
        // Mean-net contribution: d mll / d mean(x_p) = alpha_p.
        let trace = mlp_forward_traced(&cfg.mean_arch, mean_p, x)?;
        let (g_mean, _) = mlp_backward(&cfg.mean_arch, mean_p, &trace, &[parts.alpha[p]])?;
        for (dst, g) in grad[..mean_len].iter_mut().zip(&g_mean) {
            *dst += g;
        }
        // Feature-net contribution: d mll / d f_p = -4 Σ_j W_pj k_pj (f_p − f_j).
        let mut upstream = vec![0.0; feat_dim];
        for j in 0..m {
            if j == p {
                continue;
            }
            let coeff = -4.0 * w.get(p, j) * parts.kernel.get(p, j);
            for t in 0..feat_dim {
                upstream[t] += coeff * (parts.features[p][t] - parts.features[j][t]);
            }
        }
        let trace = mlp_forward_traced(&cfg.feature_arch, feat_p, x)?;
        let (g_feat, _) = mlp_backward(&cfg.feature_arch, feat_p, &trace, &upstream)?;
        for (dst, g) in grad[mean_len..].iter_mut().zip(&g_feat) {
            *dst += g;
        }
    }
    Ok((value, grad))
}

/// Posterior predictive at `x_star` after conditioning on `(inputs, targets)`.
/// An empty conditioning set yields the prior predictive.
pub fn gp_posterior_predict(
    cfg: &GpConfig,
    phi: &[f64],
    inputs: &DenseMatrix,
    targets: &[f64],
    x_star: &[f64],
) -> Result<GpPredictive> {
    if inputs.rows() == 0 {
        return Ok(GpPredictive {
            mean: cfg.mean_value(phi, x_star)?,
            variance: 0.5 + cfg.noise_variance,
        });
    }
    let parts = gram_parts(cfg, phi, inputs, targets)?;
    let f_star = cfg.features(phi, x_star)?;
    let k_star: Vec<f64> = parts
        .features
        .iter()
        .map(|f| 0.5 * (-sq_dist(f, &f_star)).exp())
        .collect();
    let mean = cfg.mean_value(phi, x_star)?
        + k_star.iter().zip(&parts.alpha).map(|(k, a)| k * a).sum::<f64>();
    let v = parts.solver.solve_lower(&k_star);
    let reduction: f64 = v.iter().map(|x| x * x).sum();
    let variance = (0.5 - reduction).max(1e-12) + cfg.noise_variance;
    Ok(GpPredictive { mean, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    fn tiny_cfg(input_dim: usize, noise: f64) -> GpConfig {
        GpConfig {
            mean_arch: MlpArchitecture::new(input_dim, vec![4], 1).unwrap(),
            feature_arch: MlpArchitecture::new(input_dim, vec![4], 2).unwrap(),
            noise_variance: noise,
        }
    }

    fn random_phi(cfg: &GpConfig, rng: &mut RngStream) -> Vec<f64> {
        let mut phi = cfg.mean_arch.init_params(&mut rng.fork(0));
        phi.extend(cfg.feature_arch.init_params(&mut rng.fork(1)));
        phi
    }

    fn random_task(
        cfg: &GpConfig,
        m: usize,
        rng: &mut RngStream,
    ) -> (DenseMatrix, Vec<f64>) {
        let d = cfg.mean_arch.input_dim;
        let rows: Vec<Vec<f64>> = (0..m).map(|_| rng.normal_vec(d)).collect();
        let inputs = DenseMatrix::from_rows(&rows).unwrap();
        let targets = rng.normal_vec(m);
        (inputs, targets)
    }

    #[test]
    fn kernel_at_identical_inputs_is_half() {
        let cfg = tiny_cfg(2, 0.1);
        let mut rng = RngStream::new(1, 0);
        let phi = random_phi(&cfg, &mut rng);
        let x = [0.3, -0.8];
        let k = gp_kernel(&cfg, &phi, &x, &x).unwrap();
        assert!((k - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_feature_map_gives_constant_half() {
        let cfg = tiny_cfg(2, 0.1);
        let phi = vec![0.0; cfg.phi_dim()];
        let k = gp_kernel(&cfg, &phi, &[1.0, 2.0], &[-3.0, 0.5]).unwrap();
        assert!((k - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_matches_direct_formula() {
        let cfg = tiny_cfg(2, 0.1);
        let mut rng = RngStream::new(2, 0);
        let phi = random_phi(&cfg, &mut rng);
        let (xa, xb) = ([0.2, 0.9], [-1.1, 0.4]);
        let fa = cfg.features(&phi, &xa).unwrap();
        let fb = cfg.features(&phi, &xb).unwrap();
        let d2: f64 = fa.iter().zip(&fb).map(|(a, b)| (a - b) * (a - b)).sum();
        let want = 0.5 * (-d2).exp();
        let got = gp_kernel(&cfg, &phi, &xa, &xb).unwrap();
        assert!((got - want).abs() < 1e-15);
        let sym = gp_kernel(&cfg, &phi, &xb, &xa).unwrap();
        assert_eq!(got.to_bits(), sym.to_bits());
    }

    #[test]
    fn mll_unit_ktilde_zero_residual() {
        // One point, zero mean net, noise 0.5 -> K̃ = [0.5 + 0.5] = [1].
        let cfg = tiny_cfg(1, 0.5);
        let phi = vec![0.0; cfg.phi_dim()];
        let inputs = DenseMatrix::from_rows(&[vec![0.7]]).unwrap();
        let v = gp_mll(&cfg, &phi, &inputs, &[0.0]).unwrap();
        assert!((v - (-0.918_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn mll_unit_ktilde_unit_residual() {
        let cfg = tiny_cfg(1, 0.5);
        let phi = vec![0.0; cfg.phi_dim()];
        let inputs = DenseMatrix::from_rows(&[vec![0.7]]).unwrap();
        let v = gp_mll(&cfg, &phi, &inputs, &[1.0]).unwrap();
        assert!((v - (-1.418_938_533_204_672_7)).abs() < 1e-12);
    }

    #[test]
    fn mll_matches_bruteforce_dense_formula() {
        let cfg = tiny_cfg(2, 0.3);
        let mut rng = RngStream::new(5, 0);
        let phi = random_phi(&cfg, &mut rng);
        let (inputs, targets) = random_task(&cfg, 3, &mut rng);
        // Brute force: explicit 3x3 inverse and determinant via cofactors.
        let mut kt = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                kt[i][j] = gp_kernel(&cfg, &phi, inputs.row(i), inputs.row(j)).unwrap();
                if i == j {
                    kt[i][j] += cfg.noise_variance;
                }
            }
        }
        let det = kt[0][0] * (kt[1][1] * kt[2][2] - kt[1][2] * kt[2][1])
            - kt[0][1] * (kt[1][0] * kt[2][2] - kt[1][2] * kt[2][0])
            + kt[0][2] * (kt[1][0] * kt[2][1] - kt[1][1] * kt[2][0]);
        let mut inv = [[0.0f64; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                let (c, d) = ((j + 1) % 3, (j + 2) % 3);
                inv[j][i] = (kt[a][c] * kt[b][d] - kt[a][d] * kt[b][c]) / det;
            }
        }
        let r: Vec<f64> = (0..3)
            .map(|i| targets[i] - cfg.mean_value(&phi, inputs.row(i)).unwrap())
            .collect();
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                quad += r[i] * inv[i][j] * r[j];
            }
        }
        let want = -0.5 * quad - 0.5 * det.ln() - 1.5 * LOG_2PI;
        let got = gp_mll(&cfg, &phi, &inputs, &targets).unwrap();
        assert!((got - want).abs() < 1e-8, "{got} vs {want}");
    }

    #[test]
    fn mll_invariant_to_permutation() {
        let cfg = tiny_cfg(2, 0.2);
        let mut rng = RngStream::new(6, 0);
        let phi = random_phi(&cfg, &mut rng);
        let (inputs, targets) = random_task(&cfg, 5, &mut rng);
        let a = gp_mll(&cfg, &phi, &inputs, &targets).unwrap();
        let perm = [4usize, 2, 0, 3, 1];
        let pi = inputs.select_rows(&perm);
        let pt: Vec<f64> = perm.iter().map(|&i| targets[i]).collect();
        let b = gp_mll(&cfg, &phi, &pi, &pt).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn grad_zero_mean_grad_for_zero_residual_frozen_kernel() {
        // Zero phi: mean net outputs 0, features constant. Targets equal to the
        // mean leave a zero residual, so the mean-net gradient vanishes.
        let cfg = tiny_cfg(1, 0.2);
        let phi = vec![0.0; cfg.phi_dim()];
        let inputs = DenseMatrix::from_rows(&[vec![0.1], vec![0.9]]).unwrap();
        let (_, grad) = gp_mll_grad(&cfg, &phi, &inputs, &[0.0, 0.0]).unwrap();
        let mean_len = cfg.mean_arch.param_count();
        assert!(grad[..mean_len].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn grad_invariant_to_permutation() {
        let cfg = tiny_cfg(2, 0.2);
        let mut rng = RngStream::new(7, 0);
        let phi = random_phi(&cfg, &mut rng);
        let (inputs, targets) = random_task(&cfg, 4, &mut rng);
        let (_, ga) = gp_mll_grad(&cfg, &phi, &inputs, &targets).unwrap();
        let perm = [3usize, 0, 2, 1];
        let pi = inputs.select_rows(&perm);
        let pt: Vec<f64> = perm.iter().map(|&i| targets[i]).collect();
        let (_, gb) = gp_mll_grad(&cfg, &phi, &pi, &pt).unwrap();
        for (a, b) in ga.iter().zip(&gb) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn grad_matches_finite_differences() {
        let cfg = tiny_cfg(1, 0.25);
        for seed in 0..10u64 {
            let mut rng = RngStream::new(40 + seed, 0);
            let phi = random_phi(&cfg, &mut rng);
            let (inputs, targets) = random_task(&cfg, 4, &mut rng);
            let (_, grad) = gp_mll_grad(&cfg, &phi, &inputs, &targets).unwrap();
            let h = 1e-5;
            let scale = grad.iter().map(|g| g.abs()).fold(1e-6, f64::max);
            for i in (0..phi.len()).step_by(3) {
                let mut pp = phi.clone();
                let mut pm = phi.clone();
                pp[i] += h;
                pm[i] -= h;
                let fd = (gp_mll(&cfg, &pp, &inputs, &targets).unwrap()
                    - gp_mll(&cfg, &pm, &inputs, &targets).unwrap())
                    / (2.0 * h);
                assert!(
                    (grad[i] - fd).abs() / scale < 1e-4,
                    "seed {seed} coord {i}: {} vs {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn predict_empty_context_is_prior() {
        let cfg = tiny_cfg(1, 0.05);
        let mut rng = RngStream::new(9, 0);
        let phi = random_phi(&cfg, &mut rng);
        let inputs = DenseMatrix::zeros(0, 1);
        let pred = gp_posterior_predict(&cfg, &phi, &inputs, &[], &[0.4]).unwrap();
        let want_mean = cfg.mean_value(&phi, &[0.4]).unwrap();
        assert!((pred.mean - want_mean).abs() < 1e-14);
        assert!((pred.variance - (0.5 + 0.05)).abs() < 1e-14);
    }

    #[test]
    fn predict_interpolates_in_noiseless_limit() {
        let cfg = tiny_cfg(1, 1e-12);
        let mut rng = RngStream::new(10, 0);
        let phi = random_phi(&cfg, &mut rng);
        let inputs = DenseMatrix::from_rows(&[vec![0.2], vec![1.4]]).unwrap();
        let targets = [0.9, -0.3];
        let pred = gp_posterior_predict(&cfg, &phi, &inputs, &targets, &[0.2]).unwrap();
        assert!((pred.mean - 0.9).abs() < 1e-4, "mean {}", pred.mean);
    }

    #[test]
    fn predict_matches_bruteforce_conditional() {
        let cfg = tiny_cfg(1, 0.1);
        let mut rng = RngStream::new(11, 0);
        let phi = random_phi(&cfg, &mut rng);
        let inputs = DenseMatrix::from_rows(&[vec![-0.5], vec![0.8]]).unwrap();
        let targets = [0.4, 1.1];
        let x_star = [0.15];
        // Dense 2x2 conditional-Gaussian formula.
        let k = |a: &[f64], b: &[f64]| gp_kernel(&cfg, &phi, a, b).unwrap();
        let k11 = k(inputs.row(0), inputs.row(0)) + cfg.noise_variance;
        let k12 = k(inputs.row(0), inputs.row(1));
        let k22 = k(inputs.row(1), inputs.row(1)) + cfg.noise_variance;
        let det = k11 * k22 - k12 * k12;
        let inv = [[k22 / det, -k12 / det], [-k12 / det, k11 / det]];
        let ks = [k(&x_star, inputs.row(0)), k(&x_star, inputs.row(1))];
        let r = [
            targets[0] - cfg.mean_value(&phi, inputs.row(0)).unwrap(),
            targets[1] - cfg.mean_value(&phi, inputs.row(1)).unwrap(),
        ];
        let mut mean = cfg.mean_value(&phi, &x_star).unwrap();
        let mut reduction = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                mean += ks[i] * inv[i][j] * r[j];
                reduction += ks[i] * inv[i][j] * ks[j];
            }
        }
        let var = 0.5 - reduction + cfg.noise_variance;
        let pred = gp_posterior_predict(&cfg, &phi, &inputs, &targets, &x_star).unwrap();
        assert!((pred.mean - mean).abs() < 1e-8);
        assert!((pred.variance - var).abs() < 1e-8);
    }

    #[test]
    fn duplicate_observation_never_increases_variance() {
        let cfg = tiny_cfg(1, 0.1);
        for seed in 0..10u64 {
            let mut rng = RngStream::new(60 + seed, 0);
            let phi = random_phi(&cfg, &mut rng);
            let (inputs, targets) = random_task(&cfg, 3, &mut rng);
            let x_star = [rng.normal()];
            let before = gp_posterior_predict(&cfg, &phi, &inputs, &targets, &x_star).unwrap();
            let mut rows: Vec<Vec<f64>> = inputs.row_iter().map(|r| r.to_vec()).collect();
            rows.push(rows[0].clone());
            let mut t2 = targets.clone();
            t2.push(targets[0]);
            let bigger = DenseMatrix::from_rows(&rows).unwrap();
            let after = gp_posterior_predict(&cfg, &phi, &bigger, &t2, &x_star).unwrap();
            assert!(
                after.variance <= before.variance + 1e-9,
                "seed {seed}: {} -> {}",
                before.variance,
                after.variance
            );
        }
    }

    #[test]
    fn kernel_matrix_is_psd() {
        // Eigenvalues of the 3x3 kernel Gram matrix stay above -1e-9,
        // checked via the characteristic-polynomial-free power method on
        // (K - lambda_max I) style shifts is overkill; use the determinant
        // test for all leading principal minors instead.
        let cfg = tiny_cfg(2, 0.0);
        for seed in 0..10u64 {
            let mut rng = RngStream::new(80 + seed, 0);
            let phi = random_phi(&cfg, &mut rng);
            let (inputs, _) = random_task(&cfg, 3, &mut rng);
            let mut k = [[0.0f64; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    k[i][j] = gp_kernel(&cfg, &phi, inputs.row(i), inputs.row(j)).unwrap();
                }
            }
            let m1 = k[0][0];
            let m2 = k[0][0] * k[1][1] - k[0][1] * k[1][0];
            let m3 = k[0][0] * (k[1][1] * k[2][2] - k[1][2] * k[2][1])
                - k[0][1] * (k[1][0] * k[2][2] - k[1][2] * k[2][0])
                + k[0][2] * (k[1][0] * k[2][1] - k[1][1] * k[2][0]);
            assert!(m1 >= -1e-9 && m2 >= -1e-9 && m3 >= -1e-9, "minors {m1} {m2} {m3}");
        }
    }
}
