//! Metrics: RMSE, regression calibration error, expected calibration error
//! for classification, and bandit regret curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of confidence levels / bins used by the calibration metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub levels: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self { levels: 20 }
    }
}

impl CalibrationConfig {
    fn validate(&self) -> Result<()> {
        if self.levels < 2 {
            return Err(Error::InvalidConfig("need at least two confidence levels".into()));
        }
        Ok(())
    }
}

/// Root mean squared error between predictions and targets.
pub fn rmse(predicted: &[f64], targets: &[f64]) -> Result<f64> {
    if predicted.len() != targets.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: targets.len() });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mse: f64 = predicted
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / predicted.len() as f64;
    Ok(mse.sqrt())
}

/// Regression calibration error from the predictive CDF evaluated at the
/// observed targets: mean absolute gap between nominal levels `q_h = h/H`
/// and the empirical frequencies of `F̂(y) <= q_h`.
pub fn regression_calibration_error(cdf_values: &[f64], cfg: CalibrationConfig) -> Result<f64> {
    cfg.validate()?;
    if cdf_values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = cdf_values.len() as f64;
    let h_levels = cfg.levels;
    let mut acc = 0.0;
    for h in 1..=h_levels {
        let q = h as f64 / h_levels as f64;
        let freq = cdf_values.iter().filter(|&&f| f <= q).count() as f64 / m;
        acc += (freq - q).abs();
    }
    Ok(acc / h_levels as f64)
}

/// Expected calibration error for classification: bin predictions by
/// confidence into `((h-1)/H, h/H]` and average `|accuracy - confidence|`
/// weighted by bin occupancy.
pub fn ece(
    confidences: &[f64],
    predicted: &[usize],
    truth: &[usize],
    cfg: CalibrationConfig,
) -> Result<f64> {
    cfg.validate()?;
    if confidences.len() != predicted.len() || predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: confidences.len(), right: truth.len() });
    }
    if confidences.is_empty() {
        return Err(Error::EmptyInput);
    }
    if confidences.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
        return Err(Error::InvalidConfig("confidences must lie in (0, 1]".into()));
    }
    let bins = cfg.levels;
    let m = confidences.len() as f64;
    let mut acc_sum = vec![0.0; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for i in 0..confidences.len() {
        // Bin (h-1)/H < c <= h/H; c > 0 guarantees a valid index.
        let b = ((confidences[i] * bins as f64).ceil() as usize).clamp(1, bins) - 1;
        count[b] += 1;
        conf_sum[b] += confidences[i];
        acc_sum[b] += if predicted[i] == truth[i] { 1.0 } else { 0.0 };
    }
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] > 0 {
            let k = count[b] as f64;
            total += k / m * ((acc_sum[b] / k) - (conf_sum[b] / k)).abs();
        }
    }
    Ok(total)
}

/// Average and simple regret curves over a reward history against the pool
/// optimum `r_star`.
pub fn regret_curves(rewards: &[f64], r_star: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if rewards.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut avg = Vec::with_capacity(rewards.len());
    let mut simple = Vec::with_capacity(rewards.len());
    let mut sum = 0.0;
    let mut best = f64::NEG_INFINITY;
    for (t, &r) in rewards.iter().enumerate() {
        sum += r;
        best = best.max(r);
        avg.push(r_star - sum / (t + 1) as f64);
        simple.push(r_star - best);
    }
    Ok((avg, simple))
}
