//! Equal-weight mixture predictive distributions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::normal_cdf;

/// Per-query predictive: a mixture of Gaussians for regression or a
/// categorical distribution for classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictiveDistribution {
    GaussianMixture { means: Vec<f64>, variances: Vec<f64> },
    Categorical { probs: Vec<f64> },
}

impl PredictiveDistribution {
    /// Mixture mean (regression) or probability of class 1 is not defined
    /// here; categorical mean is the probability-weighted class index.
    pub fn mean(&self) -> f64 {
        match self {
            PredictiveDistribution::GaussianMixture { means, .. } => {
                means.iter().sum::<f64>() / means.len() as f64
            }
            PredictiveDistribution::Categorical { probs } => {
                probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
            }
        }
    }

    /// Mixture variance via the law of total variance.
    pub fn variance(&self) -> f64 {
        match self {
            PredictiveDistribution::GaussianMixture { means, variances } => {
                let k = means.len() as f64;
                let mean = self.mean();
                let ev: f64 = variances.iter().sum::<f64>() / k;
                let vm: f64 = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / k;
                ev + vm
            }
            PredictiveDistribution::Categorical { probs } => {
                let mean = self.mean();
                probs
                    .iter()
                    .enumerate()
                    .map(|(c, p)| p * (c as f64 - mean) * (c as f64 - mean))
                    .sum()
            }
        }
    }

    /// Mixture CDF at `y` (average of component normal CDFs). Only defined
    /// for the Gaussian mixture variant.
    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            PredictiveDistribution::GaussianMixture { means, variances } => {
                let k = means.len() as f64;
                means
                    .iter()
                    .zip(variances)
                    .map(|(m, v)| normal_cdf(y, *m, v.sqrt()))
                    .sum::<f64>()
                    / k
            }
            PredictiveDistribution::Categorical { .. } => {
                panic!("cdf is defined for the Gaussian-mixture predictive only")
            }
        }
    }

    /// Most probable class (classification only).
    pub fn argmax_class(&self) -> usize {
        match self {
            PredictiveDistribution::Categorical { probs } => {
                let mut best = 0;
                for (i, &p) in probs.iter().enumerate() {
                    if p > probs[best] {
                        best = i;
                    }
                }
                best
            }
            _ => panic!("argmax_class is defined for the categorical predictive only"),
        }
    }

    /// Confidence of the most probable class (classification only).
    pub fn confidence(&self) -> f64 {
        match self {
            PredictiveDistribution::Categorical { probs } => {
                probs.iter().cloned().fold(0.0, f64::max)
            }
            _ => panic!("confidence is defined for the categorical predictive only"),
        }
    }
}

/// Equal-weight Gaussian mixture from `(mean, variance)` components.
pub fn predict_mixture(components: &[(f64, f64)]) -> Result<PredictiveDistribution> {
    if components.is_empty() {
        return Err(Error::EmptyInput);
    }
    if components.iter().any(|(m, v)| !m.is_finite() || !v.is_finite() || *v <= 0.0) {
        return Err(Error::NonFinite("mixture component".into()));
    }
    Ok(PredictiveDistribution::GaussianMixture {
        means: components.iter().map(|c| c.0).collect(),
        variances: components.iter().map(|c| c.1).collect(),
    })
}

/// Equal-weight average of categorical distributions.
pub fn predict_mixture_categorical(components: &[Vec<f64>]) -> Result<PredictiveDistribution> {
    if components.is_empty() {
        return Err(Error::EmptyInput);
    }
    let classes = components[0].len();
    let mut probs = vec![0.0; classes];
    for c in components {
        if c.len() != classes {
            return Err(Error::LengthMismatch { left: classes, right: c.len() });
        }
        for (dst, p) in probs.iter_mut().zip(c) {
            *dst += p;
        }
    }
    for p in &mut probs {
        *p /= components.len() as f64;
    }
    Ok(PredictiveDistribution::Categorical { probs })
}
