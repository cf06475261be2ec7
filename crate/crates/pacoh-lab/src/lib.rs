//! PAC-Bayesian meta-learning of Gaussian-process and Bayesian-neural-network
//! priors, with numerical evaluation of the accompanying generalization
//! bounds on synthetic environments and a candidate-pool Bayesian
//! optimization harness driven by meta-learned priors.
//!
//! The crate is organized around the pipeline:
//!
//! * [`envs`] — reproducible synthetic task generators;
//! * [`gp`] / [`bnn`] — base learners exposing (generalized) marginal
//!   log-likelihoods and their gradients with respect to prior parameters;
//! * [`meta`] — hyper-posterior score, MAP/SVGD/VI meta-training, target
//!   training, and mixture predictives;
//! * [`bounds`] — complexity terms and Monte-Carlo bound evaluation;
//! * [`eval`] — RMSE, calibration, and regret metrics;
//! * [`bo`] — the discrete-pool bandit loop.
//!
//! All randomness flows through [`numerics::RngStream`], a counter-based
//! splittable stream: equal seeds yield bit-identical results.

pub mod bnn;
pub mod bo;
pub mod bounds;
pub mod envs;
pub mod error;
pub mod eval;
pub mod gp;
pub mod meta;
pub mod mlp;
pub mod numerics;

pub use error::{Error, Result};

/// FNV-1a hash of a byte string; used for config hashes in output headers.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
