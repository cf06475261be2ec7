//! Mini-batched meta-training of the hyper-posterior approximation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optimizer::{Optimizer, OptimizerKind};
use super::svgd::{svgd_directions, BandwidthPolicy};
use super::vi::vi_objective_and_grad;
use super::{pacoh_log_score, HyperPosterior, LambdaBetaMode, ScoreModel};
use crate::envs::TaskDataset;
use crate::error::{Error, Result};
use crate::numerics::{norm2, DiagonalGaussian, RngStream};

/// Hyper-posterior approximation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApproxMethod {
    Map,
    Svgd,
    Vi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaTrainConfig {
    pub method: ApproxMethod,
    /// Particle count for SVGD (forced to 1 for MAP) or sample count for VI.
    pub particles: usize,
    /// Task mini-batch size; 0 means full batch.
    pub task_batch: usize,
    /// Per-task point mini-batch size; 0 means all points.
    pub point_batch: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub lambda_beta: LambdaBetaMode,
    pub hyper_prior_std: f64,
    pub bandwidth: BandwidthPolicy,
    /// KL tempering weight for VI, in (0, 1].
    pub vi_tempering: f64,
    pub optimizer: OptimizerKind,
    /// Drop the hyper-prior term from the score (marginal-likelihood-only
    /// ablation).
    pub mll_only: bool,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        Self {
            method: ApproxMethod::Map,
            particles: 1,
            task_batch: 0,
            point_batch: 0,
            learning_rate: 1e-2,
            iterations: 1000,
            lambda_beta: LambdaBetaMode::Linear,
            hyper_prior_std: 1.0,
            bandwidth: BandwidthPolicy::Median,
            vi_tempering: 0.1,
            optimizer: OptimizerKind::Adam,
            mll_only: false,
        }
    }
}

impl MetaTrainConfig {
    pub fn validate(&self, n_tasks: usize) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.vi_tempering) || self.vi_tempering == 0.0 {
            return Err(Error::InvalidConfig("vi_tempering must lie in (0, 1]".into()));
        }
        if self.task_batch > n_tasks {
            return Err(Error::InvalidConfig(format!(
                "task batch {} exceeds task count {n_tasks}",
                self.task_batch
            )));
        }
        if self.particles == 0 {
            return Err(Error::InvalidConfig("need at least one particle".into()));
        }
        Ok(())
    }

    fn effective_particles(&self) -> usize {
        match self.method {
            ApproxMethod::Map => 1,
            _ => self.particles,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub iteration: usize,
    /// Mean hyper-posterior score over particles (negative VI objective for
    /// the VI method).
    pub score: f64,
    pub grad_norm: f64,
}

const BATCH_LABEL: u64 = 0x5eed_ba7c;
const POINT_LABEL: u64 = 0x5eed_9021;
const PARTICLE_LABEL: u64 = 0x5eed_9a27;
const INIT_LABEL: u64 = 0x5eed_1217;

/// Approximates the optimal hyper-posterior over prior parameters by
/// gradient-based score ascent (MAP/SVGD) or variational inference.
pub fn meta_train<M: ScoreModel>(
    model: &M,
    tasks: &[TaskDataset],
    cfg: &MetaTrainConfig,
    rng: &RngStream,
) -> Result<(HyperPosterior, Vec<TrainLogRow>)> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate(tasks.len())?;
    let n = tasks.len();
    let lambda = cfg.lambda_beta.lambda(n);
    let betas: Vec<f64> = tasks.iter().map(|t| cfg.lambda_beta.beta(t.len())).collect();
    let hyper_prior = DiagonalGaussian::spherical(model.phi_dim(), cfg.hyper_prior_std);
    match cfg.method {
        ApproxMethod::Vi => train_vi(model, tasks, &hyper_prior, cfg, rng),
        ApproxMethod::Map | ApproxMethod::Svgd => {
            train_particles(model, tasks, &betas, lambda, &hyper_prior, cfg, rng)
        }
    }
}

/// Same as [`meta_train`] but with an explicit hyper-prior (used when its
/// mean is not zero, e.g. the learned-noise coordinate of BNN priors).
pub fn meta_train_with_hyper_prior<M: ScoreModel>(
    model: &M,
    tasks: &[TaskDataset],
    hyper_prior: &DiagonalGaussian,
    cfg: &MetaTrainConfig,
    rng: &RngStream,
) -> Result<(HyperPosterior, Vec<TrainLogRow>)> {
    if tasks.is_empty() {
        return Err(Error::EmptyInput);
    }
    cfg.validate(tasks.len())?;
    let n = tasks.len();
    let lambda = cfg.lambda_beta.lambda(n);
    let betas: Vec<f64> = tasks.iter().map(|t| cfg.lambda_beta.beta(t.len())).collect();
    match cfg.method {
        ApproxMethod::Vi => train_vi(model, tasks, hyper_prior, cfg, rng),
        ApproxMethod::Map | ApproxMethod::Svgd => {
            train_particles(model, tasks, &betas, lambda, hyper_prior, cfg, rng)
        }
    }
}

/// Selects the task mini-batch for an iteration; indices come back sorted so
/// accumulation order is independent of task ordering in `tasks`.
fn select_batch(n: usize, batch_size: usize, iter_rng: &RngStream) -> Vec<usize> {
    if batch_size == 0 || batch_size >= n {
        return (0..n).collect();
    }
    let mut pick_rng = iter_rng.fork(BATCH_LABEL);
    let mut idx = pick_rng.sample_indices(n, batch_size);
    idx.sort_unstable();
    idx
}

fn subsample_points(
    task: &TaskDataset,
    point_batch: usize,
    iter_rng: &RngStream,
) -> TaskDataset {
    if point_batch == 0 || point_batch >= task.len() {
        return task.clone();
    }
    let mut rng = iter_rng.fork(POINT_LABEL).fork(task.task_id);
    let idx = rng.sample_indices(task.len(), point_batch);
    task.subset(&idx)
}

fn train_particles<M: ScoreModel>(
    model: &M,
    tasks: &[TaskDataset],
    betas: &[f64],
    lambda: f64,
    hyper_prior: &DiagonalGaussian,
    cfg: &MetaTrainConfig,
    rng: &RngStream,
) -> Result<(HyperPosterior, Vec<TrainLogRow>)> {
    let k = cfg.effective_particles();
    let dim = model.phi_dim();
    let init_rng = rng.fork(INIT_LABEL);
    let mut particles: Vec<Vec<f64>> = (0..k as u64)
        .map(|i| model.init_particle(hyper_prior, &mut init_rng.fork(i)))
        .collect();
    let mut optimizers: Vec<Optimizer> =
        (0..k).map(|_| Optimizer::new(cfg.optimizer, cfg.learning_rate, dim)).collect();
    let mut log = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let iter_rng = rng.fork(iter as u64);
        let batch_idx = select_batch(tasks.len(), cfg.task_batch, &iter_rng);
        let subtasks: Vec<TaskDataset> = batch_idx
            .iter()
            .map(|&i| subsample_points(&tasks[i], cfg.point_batch, &iter_rng))
            .collect();
        // Accumulate in task-id order so results do not depend on how the
        // task list happens to be ordered.
        let mut batch: Vec<(&TaskDataset, f64)> =
            batch_idx.iter().zip(&subtasks).map(|(&i, t)| (t, betas[i])).collect();
        batch.sort_by_key(|(t, _)| t.task_id);

        let evals: Vec<Result<(f64, Vec<f64>)>> = particles
            .par_iter()
            .enumerate()
            .map(|(p, phi)| {
                let score_rng = iter_rng.fork(PARTICLE_LABEL + p as u64);
                pacoh_log_score(
                    model,
                    phi,
                    &batch,
                    hyper_prior,
                    lambda,
                    tasks.len(),
                    cfg.mll_only,
                    &score_rng,
                )
            })
            .collect();
        let mut scores = Vec::with_capacity(k);
        let mut grads = Vec::with_capacity(k);
        for e in evals {
            let (s, g) = e?;
            scores.push(s);
            grads.push(g);
        }

        let mean_score = scores.iter().sum::<f64>() / k as f64;
        let mean_grad_norm = grads.iter().map(|g| norm2(g)).sum::<f64>() / k as f64;
        log.push(TrainLogRow { iteration: iter, score: mean_score, grad_norm: mean_grad_norm });

        let directions = svgd_directions(&particles, &grads, cfg.bandwidth);
        for ((particle, opt), dir) in particles.iter_mut().zip(&mut optimizers).zip(&directions)
        {
            opt.step(particle, dir);
            if particle.iter().any(|v| !v.is_finite()) {
                return Err(Error::DivergenceDetected("particle became non-finite".into()));
            }
        }
    }
    Ok((HyperPosterior::Particles { particles }, log))
}

fn train_vi<M: ScoreModel>(
    model: &M,
    tasks: &[TaskDataset],
    hyper_prior: &DiagonalGaussian,
    cfg: &MetaTrainConfig,
    rng: &RngStream,
) -> Result<(HyperPosterior, Vec<TrainLogRow>)> {
    let dim = model.phi_dim();
    // Table-style initialization: the variational family starts at the
    // hyper-prior.
    let mut upsilon: Vec<f64> = hyper_prior
        .mean
        .iter()
        .copied()
        .chain(hyper_prior.log_std.iter().copied())
        .collect();
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, 2 * dim);
    let mut log = Vec::with_capacity(cfg.iterations);

    for iter in 0..cfg.iterations {
        let iter_rng = rng.fork(iter as u64);
        let batch_idx = select_batch(tasks.len(), cfg.task_batch, &iter_rng);
        let subtasks: Vec<TaskDataset> = batch_idx
            .iter()
            .map(|&i| subsample_points(&tasks[i], cfg.point_batch, &iter_rng))
            .collect();
        // VI weights each task by its full size, independent of point batching.
        let mut batch: Vec<(&TaskDataset, f64)> = batch_idx
            .iter()
            .zip(&subtasks)
            .map(|(&i, t)| (t, tasks[i].len() as f64))
            .collect();
        batch.sort_by_key(|(t, _)| t.task_id);
        let full_sizes: Vec<usize> = tasks.iter().map(|t| t.len()).collect();

        let (objective, grad) = vi_objective_and_grad(
            model,
            &upsilon,
            &batch,
            &full_sizes,
            hyper_prior,
            cfg.vi_tempering,
            cfg.particles,
            &iter_rng.fork(PARTICLE_LABEL),
        )?;
        log.push(TrainLogRow {
            iteration: iter,
            score: -objective,
            grad_norm: norm2(&grad),
        });
        // Descent on the VI objective = ascent along the negated gradient.
        let ascent: Vec<f64> = grad.iter().map(|g| -g).collect();
        opt.step(&mut upsilon, &ascent);
        if upsilon.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergenceDetected("variational parameters non-finite".into()));
        }
    }
    let (mean, log_std) = upsilon.split_at(dim);
    Ok((
        HyperPosterior::Vi { mean: mean.to_vec(), log_std: log_std.to_vec() },
        log,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::test_support::{toy_task, BlrScoreModel};

    fn toy_tasks(n: usize, seed: u64) -> Vec<TaskDataset> {
        let root = RngStream::new(seed, 0);
        (0..n as u64)
            .map(|i| {
                let mut rng = root.fork(i);
                let w = 0.8 + 0.05 * rng.normal();
                let xs: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
                let ys: Vec<f64> = xs.iter().map(|x| w * x + 0.1 * rng.normal()).collect();
                toy_task(i, &xs, &ys)
            })
            .collect()
    }

    #[test]
    fn near_dirac_hyper_prior_dominates() {
        let model = BlrScoreModel { dim: 1, prior_std: 0.3, likelihood_var: 0.1 };
        let tasks = toy_tasks(4, 1);
        let cfg = MetaTrainConfig {
            method: ApproxMethod::Map,
            hyper_prior_std: 1e-4,
            learning_rate: 1e-5,
            iterations: 300,
            ..Default::default()
        };
        let rng = RngStream::new(2, 0);
        let (post, _) = meta_train(&model, &tasks, &cfg, &rng).unwrap();
        match post {
            HyperPosterior::Particles { particles } => {
                assert!(particles[0][0].abs() < 3e-4, "phi = {}", particles[0][0]);
            }
            _ => panic!("expected particles"),
        }
    }

    #[test]
    fn svgd_k1_identical_to_map() {
        let model = BlrScoreModel { dim: 1, prior_std: 0.3, likelihood_var: 0.1 };
        let tasks = toy_tasks(3, 5);
        let base = MetaTrainConfig {
            iterations: 50,
            learning_rate: 0.02,
            ..Default::default()
        };
        let rng = RngStream::new(7, 0);
        let map_cfg = MetaTrainConfig { method: ApproxMethod::Map, particles: 1, ..base.clone() };
        let svgd_cfg =
            MetaTrainConfig { method: ApproxMethod::Svgd, particles: 1, ..base.clone() };
        let (a, _) = meta_train(&model, &tasks, &map_cfg, &rng).unwrap();
        let (b, _) = meta_train(&model, &tasks, &svgd_cfg, &rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn map_matches_grid_search_argmax() {
        // 1-D linear-Gaussian meta-problem with closed-form evidence: the MAP
        // of the hyper-posterior score must coincide with a dense grid search.
        let model = BlrScoreModel { dim: 1, prior_std: 0.2, likelihood_var: 0.1 };
        let tasks = toy_tasks(6, 9);
        let cfg = MetaTrainConfig {
            method: ApproxMethod::Map,
            learning_rate: 0.02,
            iterations: 1500,
            hyper_prior_std: 1.0,
            lambda_beta: LambdaBetaMode::Linear,
            ..Default::default()
        };
        let rng = RngStream::new(11, 0);
        let (post, _) = meta_train(&model, &tasks, &cfg, &rng).unwrap();
        let phi_star = match post {
            HyperPosterior::Particles { particles } => particles[0][0],
            _ => unreachable!(),
        };

        let hyper_prior = DiagonalGaussian::spherical(1, 1.0);
        let lambda = tasks.len() as f64;
        let batch: Vec<(&TaskDataset, f64)> =
            tasks.iter().map(|t| (t, t.len() as f64)).collect();
        let score_of = |phi: f64| {
            pacoh_log_score(
                &model,
                &[phi],
                &batch,
                &hyper_prior,
                lambda,
                tasks.len(),
                false,
                &rng,
            )
            .unwrap()
            .0
        };
        let grid_step = 2.0 / 200.0;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=200 {
            let phi = -1.0 + i as f64 * grid_step;
            let s = score_of(phi);
            if s > best.0 {
                best = (s, phi);
            }
        }
        assert!(
            (phi_star - best.1).abs() <= grid_step,
            "MAP {phi_star} vs grid argmax {}",
            best.1
        );
    }

    #[test]
    fn full_batch_map_ascends_monotonically_with_sgd() {
        let model = BlrScoreModel { dim: 1, prior_std: 0.3, likelihood_var: 0.2 };
        let tasks = toy_tasks(5, 13);
        let cfg = MetaTrainConfig {
            method: ApproxMethod::Map,
            optimizer: OptimizerKind::Sgd,
            learning_rate: 1e-4,
            iterations: 50,
            ..Default::default()
        };
        let rng = RngStream::new(3, 0);
        let (_, log) = meta_train(&model, &tasks, &cfg, &rng).unwrap();
        let violations = log.windows(2).filter(|w| w[1].score < w[0].score - 1e-12).count();
        assert!(violations == 0, "{violations} descent steps in 50");
    }

    #[test]
    fn task_order_invariance_full_batch() {
        let model = BlrScoreModel { dim: 1, prior_std: 0.3, likelihood_var: 0.1 };
        let tasks = toy_tasks(4, 21);
        let mut shuffled = tasks.clone();
        shuffled.swap(0, 3);
        shuffled.swap(1, 2);
        let cfg = MetaTrainConfig { iterations: 40, learning_rate: 0.01, ..Default::default() };
        let rng = RngStream::new(4, 0);
        let (a, _) = meta_train(&model, &tasks, &cfg, &rng).unwrap();
        let (b, _) = meta_train(&model, &shuffled, &cfg, &rng).unwrap();
        assert_eq!(a, b);
    }
}
