//! Dense linear algebra, stable log-space arithmetic, seeded random streams,
//! and Gaussian density utilities used by every other module.

mod gaussian;
mod matrix;
mod rng;
mod special;

pub use gaussian::{gaussian_logpdf, DiagonalGaussian};
pub use matrix::{cholesky_logdet_solve, DenseMatrix, SpdSolver};
pub use rng::RngStream;
pub use special::{normal_cdf, normal_logpdf};

use crate::error::{Error, Result};

/// Overflow-safe `log(sum(exp(v)))`.
///
/// Entries may be `-inf`; an all-`-inf` input yields `-inf`.
pub fn logsumexp(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut max = f64::NEG_INFINITY;
    for &x in v {
        if x.is_nan() || x == f64::INFINITY {
            return Err(Error::NonFinite(format!("logsumexp entry {x}")));
        }
        if x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = v.iter().map(|&x| (x - max).exp()).sum();
    Ok(max + sum.ln())
}

/// Softmax of `v`, computed via the shifted exponentials of [`logsumexp`].
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    let lse = logsumexp(v)?;
    if lse == f64::NEG_INFINITY {
        // Degenerate: treat as uniform over the entries.
        return Ok(vec![1.0 / v.len() as f64; v.len()]);
    }
    Ok(v.iter().map(|&x| (x - lse).exp()).collect())
}

/// Euclidean norm of a vector.
pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Squared Euclidean distance between two equal-length vectors.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
