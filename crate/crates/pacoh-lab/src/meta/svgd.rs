//! Stein variational gradient descent update on particle sets.

use serde::{Deserialize, Serialize};

use crate::numerics::sq_dist;

/// Kernel bandwidth policy for the SE kernel `exp(-||a-b||² / (2 l))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum BandwidthPolicy {
    /// Median heuristic over current pairwise squared distances,
    /// recomputed each step.
    Median,
    /// Fixed squared length scale.
    Fixed { lengthscale: f64 },
}

fn bandwidth(particles: &[Vec<f64>], policy: BandwidthPolicy) -> f64 {
    match policy {
        BandwidthPolicy::Fixed { lengthscale } => lengthscale.max(1e-12),
        BandwidthPolicy::Median => {
            let k = particles.len();
            if k <= 1 {
                return 1.0;
            }
            let mut dists = Vec::with_capacity(k * (k - 1) / 2);
            for i in 0..k {
                for j in (i + 1)..k {
                    dists.push(sq_dist(&particles[i], &particles[j]));
                }
            }
            dists.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
            let med = dists[dists.len() / 2];
            (med / (2.0 * ((k + 1) as f64).ln())).max(1e-12)
        }
    }
}

/// Update directions `(1/K) Σ_{k'} [k(φ_{k'}, φ_k) g_{k'} + ∇_{φ_{k'}} k(φ_{k'}, φ_k)]`
/// for score gradients `g`. With a single particle this is the plain score.
pub fn svgd_directions(
    particles: &[Vec<f64>],
    score_grads: &[Vec<f64>],
    policy: BandwidthPolicy,
) -> Vec<Vec<f64>> {
    let k = particles.len();
    assert_eq!(k, score_grads.len(), "one score gradient per particle");
    if k == 0 {
        return Vec::new();
    }
    let dim = particles[0].len();
    let ell = bandwidth(particles, policy);
    let mut dirs = vec![vec![0.0; dim]; k];
    for target in 0..k {
        let dir = &mut dirs[target];
        for source in 0..k {
            let kv = (-sq_dist(&particles[source], &particles[target]) / (2.0 * ell)).exp();
            for t in 0..dim {
                // ∇_{φ_source} k(φ_source, φ_target) = -(φ_source - φ_target) k / l
                let grad_k = -(particles[source][t] - particles[target][t]) * kv / ell;
                dir[t] += kv * score_grads[source][t] + grad_k;
            }
        }
        for v in dir.iter_mut() {
            *v /= k as f64;
        }
    }
    dirs
}

/// Plain SVGD step `φ_k += step * direction_k`.
pub fn svgd_step(
    particles: &mut [Vec<f64>],
    score_grads: &[Vec<f64>],
    policy: BandwidthPolicy,
    step: f64,
) {
    let dirs = svgd_directions(particles, score_grads, policy);
    for (p, d) in particles.iter_mut().zip(&dirs) {
        for (pi, di) in p.iter_mut().zip(d) {
            *pi += step * di;
        }
    }
}
