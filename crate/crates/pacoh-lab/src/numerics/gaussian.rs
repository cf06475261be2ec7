//! Diagonal Gaussian distributions over parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

const LOG_2PI: f64 = 1.837_877_066_409_345_3;

/// Gaussian with diagonal covariance, standard deviations stored in log-space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self> {
        if mean.len() != log_std.len() {
            return Err(Error::LengthMismatch { left: mean.len(), right: log_std.len() });
        }
        if mean.iter().chain(log_std.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("DiagonalGaussian parameter".into()));
        }
        Ok(Self { mean, log_std })
    }

    /// Zero-mean isotropic Gaussian with standard deviation `std`.
    pub fn spherical(dim: usize, std: f64) -> Self {
        Self { mean: vec![0.0; dim], log_std: vec![std.ln(); dim] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self, i: usize) -> f64 {
        self.log_std[i].exp()
    }

    pub fn log_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let mut acc = 0.0;
        for i in 0..x.len() {
            let s = self.std(i);
            let z = (x[i] - self.mean[i]) / s;
            acc += -0.5 * LOG_2PI - self.log_std[i] - 0.5 * z * z;
        }
        Ok(acc)
    }

    /// Gradient of `log_pdf` with respect to `x`.
    pub fn grad_log_pdf(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok((0..x.len())
            .map(|i| {
                let v = self.std(i).powi(2);
                -(x[i] - self.mean[i]) / v
            })
            .collect())
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mean[i] + self.std(i) * rng.normal()).collect()
    }

    /// Reparametrized sample `mean + std ⊙ eps` for a given noise vector.
    pub fn transport(&self, eps: &[f64]) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mean[i] + self.std(i) * eps[i]).collect()
    }
}

/// Log density of a diagonal Gaussian evaluated at `x`.
pub fn gaussian_logpdf(x: &[f64], g: &DiagonalGaussian) -> Result<f64> {
    g.log_pdf(x)
}
