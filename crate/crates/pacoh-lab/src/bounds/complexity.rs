//! Complexity terms `C(delta, lambda, beta)` of the meta-learning bounds.

use crate::error::{Error, Result};

/// The three additive pieces of the complexity term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityTerms {
    /// Data-level CGF bound.
    pub psi1: f64,
    /// Task-level CGF bound.
    pub psi2: f64,
    /// Confidence term `(1/sqrt(n)) log(1/delta)`.
    pub delta_term: f64,
}

impl ComplexityTerms {
    pub fn total(&self) -> f64 {
        self.psi1 + self.psi2 + self.delta_term
    }

    pub fn delta_term(n: usize, delta: f64) -> Result<f64> {
        if !(0.0 < delta && delta <= 1.0) {
            return Err(Error::InvalidConfig(format!("delta {delta} outside (0, 1]")));
        }
        Ok((1.0 / delta).ln() / (n as f64).sqrt())
    }

    /// Bounded-loss CGF terms: `psi1 = beta (b-a)² / (8m)`,
    /// `psi2 = lambda (b-a)² / (8n)`.
    pub fn bounded(
        n: usize,
        m: usize,
        lambda: f64,
        beta: f64,
        delta: f64,
        a: f64,
        b: f64,
    ) -> Result<Self> {
        if b < a {
            return Err(Error::InvalidRange { a, b });
        }
        let width_sq = (b - a) * (b - a);
        Ok(Self {
            psi1: beta * width_sq / (8.0 * m as f64),
            psi2: lambda * width_sq / (8.0 * n as f64),
            delta_term: Self::delta_term(n, delta)?,
        })
    }

    /// Sub-gamma CGF terms, valid for `beta < m/c1` and `lambda < n/c2`:
    /// `psi1 = beta s1² / (2m (1 - c1 beta / m))`,
    /// `psi2 = lambda s2² / (2n (1 - c2 lambda / n))`.
    #[allow(clippy::too_many_arguments)]
    pub fn sub_gamma(
        n: usize,
        m: usize,
        lambda: f64,
        beta: f64,
        delta: f64,
        s1_sq: f64,
        c1: f64,
        s2_sq: f64,
        c2: f64,
    ) -> Result<Self> {
        let (nf, mf) = (n as f64, m as f64);
        if c1 > 0.0 && beta >= mf / c1 {
            return Err(Error::OutOfValidityWindow(format!(
                "beta {beta} >= m/c1 = {}",
                mf / c1
            )));
        }
        if c2 > 0.0 && lambda >= nf / c2 {
            return Err(Error::OutOfValidityWindow(format!(
                "lambda {lambda} >= n/c2 = {}",
                nf / c2
            )));
        }
        Ok(Self {
            psi1: beta * s1_sq / (2.0 * mf * (1.0 - c1 * beta / mf)),
            psi2: lambda * s2_sq / (2.0 * nf * (1.0 - c2 * lambda / nf)),
            delta_term: Self::delta_term(n, delta)?,
        })
    }

    /// Assembles terms computed elsewhere (heterogeneous per-task constants).
    pub fn from_parts(psi1: f64, psi2: f64, n: usize, delta: f64) -> Result<Self> {
        Ok(Self { psi1, psi2, delta_term: Self::delta_term(n, delta)? })
    }
}

/// Bounded-loss complexity `(lambda/(8n) + beta/(8m)) (b-a)² + log(1/delta)/sqrt(n)`.
pub fn complexity_bounded(
    n: usize,
    m: usize,
    lambda: f64,
    beta: f64,
    delta: f64,
    a: f64,
    b: f64,
) -> Result<f64> {
    Ok(ComplexityTerms::bounded(n, m, lambda, beta, delta, a, b)?.total())
}

/// Sub-gamma complexity
/// `beta s1²/(2m(1-c1 beta/m)) + lambda s2²/(2n(1-c2 lambda/n)) + log(1/delta)/sqrt(n)`.
#[allow(clippy::too_many_arguments)]
pub fn complexity_subgamma(
    n: usize,
    m: usize,
    lambda: f64,
    beta: f64,
    delta: f64,
    s1_sq: f64,
    c1: f64,
    s2_sq: f64,
    c2: f64,
) -> Result<f64> {
    Ok(ComplexityTerms::sub_gamma(n, m, lambda, beta, delta, s1_sq, c1, s2_sq, c2)?.total())
}
