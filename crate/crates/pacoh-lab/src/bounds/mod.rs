//! Numerical evaluation of the generalization bounds: complexity terms for
//! bounded and sub-gamma losses, the meta-level and per-task bounds, their
//! gap, and the closed-form constants for the linear-regression case study.

mod blr;
mod complexity;
mod evaluate;
mod logreg;

pub use blr::{
    blr_cgf2_constants, blr_cgf_constants, blr_complexity, blr_gibbs_posterior, blr_log_z,
    blr_log_z_grad, blr_transfer_error, BlrCgf1, BlrCgf2, BlrEvidence, BlrModelConfig,
};
pub use complexity::{complexity_bounded, complexity_subgamma, ComplexityTerms};
pub use evaluate::{evaluate_bounds, BoundSuite, EvidenceModel, LogZSamples};
pub use logreg::{
    logistic_loss, misclassification_transfer_error, zero_one_loss, LogregEvidence,
    PosteriorLoss, TransferErrorConfig,
};

use serde::{Deserialize, Serialize};

use crate::numerics::{DiagonalGaussian, RngStream};

/// Loss tail model selecting which complexity-term corollary applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum LossModel {
    Bounded { a: f64, b: f64 },
    SubGamma { s1_sq: f64, c1: f64, s2_sq: f64, c2: f64 },
}

/// Monte-Carlo configuration shared by the bound estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    pub delta: f64,
    pub mc_priors: usize,
    pub mc_seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { delta: 0.1, mc_priors: 2000, mc_seed: 0 }
    }
}

/// Evaluated bound terms for one configuration. `total` is always
/// `empirical_term + kl_terms + complexity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Evidence term of the bound (the `-log Z` part).
    pub empirical_term: f64,
    /// Explicit KL terms; zero for the closed-form meta and per-task bounds.
    pub kl_terms: f64,
    /// Full complexity term `C(delta, lambda, beta)`.
    pub complexity: f64,
    /// Data-level CGF bound entering the complexity term.
    pub psi1: f64,
    /// Task-level CGF bound entering the complexity term.
    pub psi2: f64,
    pub total: f64,
    pub mc_std_error: f64,
}

impl BoundReport {
    pub fn new(
        empirical_term: f64,
        kl_terms: f64,
        terms: &ComplexityTerms,
        mc_std_error: f64,
    ) -> Self {
        Self {
            empirical_term,
            kl_terms,
            complexity: terms.total(),
            psi1: terms.psi1,
            psi2: terms.psi2,
            total: empirical_term + kl_terms + terms.total(),
            mc_std_error,
        }
    }

    pub fn csv_header() -> &'static str {
        "empirical_term,kl_terms,complexity,psi1,psi2,total,mc_std_error"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.empirical_term,
            self.kl_terms,
            self.complexity,
            self.psi1,
            self.psi2,
            self.total,
            self.mc_std_error
        )
    }
}

/// Source of prior parameters for transfer-error estimation: either the
/// hyper-prior itself or a weighted sample approximating a hyper-posterior.
#[derive(Debug, Clone)]
pub enum PriorSampler<'a> {
    Gaussian(&'a DiagonalGaussian),
    Weighted { samples: &'a [Vec<f64>], weights: &'a [f64] },
}

impl PriorSampler<'_> {
    pub fn draw(&self, rng: &mut RngStream) -> Vec<f64> {
        match self {
            PriorSampler::Gaussian(g) => g.sample(rng),
            PriorSampler::Weighted { samples, weights } => {
                let u = rng.uniform();
                let mut acc = 0.0;
                for (s, w) in samples.iter().zip(*weights) {
                    acc += w;
                    if u < acc {
                        return s.clone();
                    }
                }
                samples.last().expect("non-empty weighted sampler").clone()
            }
        }
    }

    /// Expectation of `f` over the sampler: exact weighted average for the
    /// weighted variant, `n_draws` Monte-Carlo draws for the Gaussian one.
    pub fn expect(
        &self,
        n_draws: usize,
        rng: &mut RngStream,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> f64 {
        match self {
            PriorSampler::Weighted { samples, weights } => {
                samples.iter().zip(*weights).map(|(s, w)| w * f(s)).sum()
            }
            PriorSampler::Gaussian(g) => {
                let mut acc = 0.0;
                for _ in 0..n_draws {
                    let s = g.sample(rng);
                    acc += f(&s);
                }
                acc / n_draws as f64
            }
        }
    }
}
