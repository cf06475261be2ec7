//! Bayesian-optimization loop over a discrete candidate pool with BNN
//! posterior particles and UCB / Thompson-sampling acquisition.

use serde::{Deserialize, Serialize};

use crate::bnn::BnnConfig;
use crate::envs::{BanditPool, TaskDataset};
use crate::error::{Error, Result};
use crate::meta::{target_train, TargetTrainConfig};
use crate::numerics::{DenseMatrix, RngStream};

/// Acquisition rule for the pool bandit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum Acquisition {
    Ucb { beta: f64 },
    ThompsonSampling,
}

/// One bandit run: chosen arms, received rewards, and a summary hash of the
/// posterior particles per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoHistory {
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub posterior_hashes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoConfig {
    pub rounds: usize,
    pub acquisition: Acquisition,
    pub target_train: TargetTrainConfig,
    /// Retraining steps per round when warm-starting from the previous
    /// round's particles.
    pub warm_start_steps: usize,
    /// Retrain from fresh prior draws each round instead of warm-starting.
    pub cold_start: bool,
    /// Gibbs temperature mode for the posterior: `beta = m` when true,
    /// `beta = sqrt(m)` otherwise.
    pub linear_beta: bool,
}

impl Default for BoConfig {
    fn default() -> Self {
        Self {
            rounds: 50,
            acquisition: Acquisition::Ucb { beta: 2.0 },
            target_train: TargetTrainConfig::default(),
            warm_start_steps: 30,
            cold_start: false,
            linear_beta: true,
        }
    }
}

/// Per-arm predictions of every posterior particle: `predictions[p][a]`.
fn particle_predictions(
    cfg: &BnnConfig,
    particle_sets: &[Vec<Vec<f64>>],
    pool: &DenseMatrix,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for set in particle_sets {
        for theta in set {
            let mut row = Vec::with_capacity(pool.rows());
            for arm in pool.row_iter() {
                row.push(cfg.predict(theta, arm)?[0]);
            }
            out.push(row);
        }
    }
    Ok(out)
}

/// UCB selection: maximizes the particle mean plus `beta_ucb` times the
/// epistemic particle standard deviation; ties break to the lowest index.
pub fn ucb_select(predictions: &[Vec<f64>], beta_ucb: f64) -> Result<usize> {
    if predictions.is_empty() || predictions[0].is_empty() {
        return Err(Error::EmptyPool);
    }
    let arms = predictions[0].len();
    let p = predictions.len() as f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    for a in 0..arms {
        let mean: f64 = predictions.iter().map(|row| row[a]).sum::<f64>() / p;
        let var: f64 =
            predictions.iter().map(|row| (row[a] - mean) * (row[a] - mean)).sum::<f64>() / p;
        let ucb = mean + beta_ucb * var.sqrt();
        if ucb > best.0 {
            best = (ucb, a);
        }
    }
    Ok(best.1)
}

/// Thompson sampling: picks one particle uniformly and takes the argmax of
/// its predictions; ties break to the lowest index.
pub fn ts_select(predictions: &[Vec<f64>], rng: &mut RngStream) -> Result<usize> {
    if predictions.is_empty() || predictions[0].is_empty() {
        return Err(Error::EmptyPool);
    }
    let row = &predictions[rng.index(predictions.len())];
    let mut best = 0;
    for (a, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = a;
        }
    }
    Ok(best)
}

fn hash_particles(sets: &[Vec<Vec<f64>>]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for set in sets {
        for theta in set {
            for v in theta {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    h
}

/// Runs the bandit protocol: round 0 queries a uniformly random arm; every
/// later round retrains the posterior particles on the accumulated data and
/// selects via the configured acquisition rule. Arms may be re-selected.
pub fn run_bo(
    pool: &BanditPool,
    rewards: &[f64],
    bnn: &BnnConfig,
    priors: &[Vec<f64>],
    cfg: &BoConfig,
    rng: &RngStream,
) -> Result<BoHistory> {
    if cfg.rounds == 0 {
        return Err(Error::InvalidConfig("need at least one round".into()));
    }
    if pool.pool_size() == 0 {
        return Err(Error::EmptyPool);
    }
    if rewards.len() != pool.pool_size() {
        return Err(Error::LengthMismatch { left: pool.pool_size(), right: rewards.len() });
    }
    let mut actions = Vec::with_capacity(cfg.rounds);
    let mut received = Vec::with_capacity(cfg.rounds);
    let mut hashes = Vec::with_capacity(cfg.rounds);

    let mut pick_rng = rng.fork(0xac71);
    let first = pick_rng.index(pool.pool_size());
    actions.push(first);
    received.push(rewards[first]);
    hashes.push(0);

    let mut particle_sets: Option<Vec<Vec<Vec<f64>>>> = None;
    for t in 1..cfg.rounds {
        let rows: Vec<Vec<f64>> =
            actions.iter().map(|&a| pool.features.row(a).to_vec()).collect();
        let context = TaskDataset {
            task_id: t as u64,
            inputs: DenseMatrix::from_rows(&rows)?,
            targets: received.clone(),
            meta: None,
        };
        let m = context.len() as f64;
        let beta = if cfg.linear_beta { m } else { m.sqrt() };
        let warm = if cfg.cold_start { None } else { particle_sets.take() };
        let tt = TargetTrainConfig {
            steps: if warm.is_some() { cfg.warm_start_steps } else { cfg.target_train.steps },
            ..cfg.target_train.clone()
        };
        let sets = target_train(bnn, priors, &context, beta, &tt, &rng.fork(t as u64), warm)?;
        let predictions = particle_predictions(bnn, &sets, &pool.features)?;
        let action = match cfg.acquisition {
            Acquisition::Ucb { beta } => ucb_select(&predictions, beta)?,
            Acquisition::ThompsonSampling => {
                ts_select(&predictions, &mut pick_rng.fork(t as u64))?
            }
        };
        actions.push(action);
        received.push(rewards[action]);
        hashes.push(hash_particles(&sets));
        particle_sets = Some(sets);
    }
    Ok(BoHistory { actions, rewards: received, posterior_hashes: hashes })
}
