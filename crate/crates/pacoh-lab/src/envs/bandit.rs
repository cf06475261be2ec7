//! Synthetic candidate-pool bandit environment with transferable structure:
//! candidates share a latent factor model and per-task reward weights are
//! drawn around a common center, so meta-learned priors carry signal.

use serde::{Deserialize, Serialize};

use super::{TaskDataset, SCHEMA_VERSION};
use crate::numerics::{DenseMatrix, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeptidePoolConfig {
    pub pool_size: usize,
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub meta_train_tasks: usize,
    /// Reward observations kept per meta-training task.
    pub samples_per_task: usize,
    /// Spread of per-task weights around the shared center.
    pub task_spread: f64,
    pub reward_noise: f64,
}

impl Default for PeptidePoolConfig {
    fn default() -> Self {
        Self {
            pool_size: 813,
            feature_dim: 45,
            latent_dim: 8,
            meta_train_tasks: 5,
            samples_per_task: 200,
            task_spread: 0.15,
            reward_noise: 0.05,
        }
    }
}

/// Discrete candidate pool with per-task reward tables. The last reward
/// table belongs to the held-out test task used for the bandit runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditPool {
    pub schema_version: u32,
    pub seed: u64,
    /// `pool_size x feature_dim` candidate features.
    pub features: DenseMatrix,
    /// Reward vector per task; meta-train tasks first, test task last.
    pub task_rewards: Vec<Vec<f64>>,
    /// Index of the test task within `task_rewards`.
    pub test_task: usize,
}

impl BanditPool {
    pub fn pool_size(&self) -> usize {
        self.features.rows()
    }

    pub fn test_rewards(&self) -> &[f64] {
        &self.task_rewards[self.test_task]
    }

    /// Index of the best arm for a task.
    pub fn optimum(&self, task: usize) -> usize {
        let rewards = &self.task_rewards[task];
        let mut best = 0;
        for (i, &r) in rewards.iter().enumerate() {
            if r > rewards[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bandit pool serializes")
    }

    pub fn from_json(s: &str) -> crate::error::Result<Self> {
        serde_json::from_str(s).map_err(|e| crate::error::Error::InvalidConfig(e.to_string()))
    }
}

/// Generates the candidate pool plus one observed-reward dataset per
/// meta-training task.
pub fn gen_peptide_pool(cfg: &PeptidePoolConfig, seed: u64) -> (BanditPool, Vec<TaskDataset>) {
    let root = RngStream::new(seed, 1);
    let q = cfg.latent_dim;
    let d = cfg.feature_dim;

    // Shared factor loadings.
    let mut factor_rng = root.fork(0);
    let scale = 1.0 / (q as f64).sqrt();
    let loadings: Vec<Vec<f64>> =
        (0..d).map(|_| (0..q).map(|_| scale * factor_rng.normal()).collect()).collect();
    let shared_latent: Vec<f64> = factor_rng.normal_vec(q);

    // Candidate features: x_a = B v_a + small isotropic noise.
    let mut rows = Vec::with_capacity(cfg.pool_size);
    for a in 0..cfg.pool_size as u64 {
        let mut rng = root.fork(1 + a);
        let v = rng.normal_vec(q);
        let x: Vec<f64> = loadings
            .iter()
            .map(|b| b.iter().zip(&v).map(|(bi, vi)| bi * vi).sum::<f64>() + 0.1 * rng.normal())
            .collect();
        rows.push(x);
    }
    let features = DenseMatrix::from_rows(&rows).expect("rows consistent");

    // Per-task weights in the latent span, spread around the shared center.
    let n_tasks = cfg.meta_train_tasks + 1;
    let mut task_rewards = Vec::with_capacity(n_tasks);
    for t in 0..n_tasks as u64 {
        let mut rng = root.fork(1_000_000 + t);
        let latent: Vec<f64> = shared_latent
            .iter()
            .map(|c| c + cfg.task_spread * rng.normal())
            .collect();
        let w: Vec<f64> = loadings
            .iter()
            .map(|b| b.iter().zip(&latent).map(|(bi, li)| bi * li).sum::<f64>())
            .collect();
        let rewards: Vec<f64> = features
            .row_iter()
            .map(|x| {
                x.iter().zip(&w).map(|(xi, wi)| xi * wi).sum::<f64>() + cfg.reward_noise * rng.normal()
            })
            .collect();
        task_rewards.push(rewards);
    }

    let pool = BanditPool {
        schema_version: SCHEMA_VERSION,
        seed,
        features,
        task_rewards,
        test_task: cfg.meta_train_tasks,
    };

    // Meta-training datasets: subsampled (candidate, reward) pairs.
    let mut train = Vec::with_capacity(cfg.meta_train_tasks);
    for t in 0..cfg.meta_train_tasks {
        let mut rng = root.fork(2_000_000 + t as u64);
        let idx = rng.sample_indices(cfg.pool_size, cfg.samples_per_task);
        let inputs = pool.features.select_rows(&idx);
        let targets: Vec<f64> = idx.iter().map(|&a| pool.task_rewards[t][a]).collect();
        train.push(TaskDataset { task_id: t as u64, inputs, targets, meta: None });
    }
    (pool, train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_dimensions_match_config() {
        let cfg = PeptidePoolConfig::default();
        let (pool, train) = gen_peptide_pool(&cfg, 3);
        assert_eq!(pool.features.rows(), 813);
        assert_eq!(pool.features.cols(), 45);
        assert_eq!(train.len(), 5);
        assert_eq!(train[0].len(), 200);
        assert_eq!(pool.task_rewards.len(), 6);
    }

    #[test]
    fn optimum_is_reward_argmax() {
        let cfg = PeptidePoolConfig { pool_size: 20, samples_per_task: 5, ..Default::default() };
        let (pool, _) = gen_peptide_pool(&cfg, 7);
        for t in 0..pool.task_rewards.len() {
            let best = pool.optimum(t);
            let max = pool.task_rewards[t].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(pool.task_rewards[t][best], max);
        }
    }

    #[test]
    fn identical_seeds_identical_pools() {
        let cfg = PeptidePoolConfig { pool_size: 50, samples_per_task: 10, ..Default::default() };
        let a = gen_peptide_pool(&cfg, 11);
        let b = gen_peptide_pool(&cfg, 11);
        assert_eq!(a, b);
    }

    #[test]
    fn tasks_share_reward_structure() {
        // Rewards of different tasks correlate strongly because weights are
        // drawn around one center; that is the transfer signal.
        let cfg = PeptidePoolConfig::default();
        let (pool, _) = gen_peptide_pool(&cfg, 5);
        let a = &pool.task_rewards[0];
        let b = pool.test_rewards();
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr > 0.5, "cross-task reward correlation too weak: {corr}");
    }
}
