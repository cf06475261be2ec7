//! Task generators for the synthetic regression and classification
//! environments.

use serde::{Deserialize, Serialize};

use super::{EnvDescriptor, MetaDataset, TaskDataset, TaskMeta, TestTask, SCHEMA_VERSION};
use crate::numerics::{sq_dist, DenseMatrix, RngStream, SpdSolver};

/// Label offset for test-task ids so train/test ids never collide.
const TEST_ID_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidEnvConfig {
    pub n_tasks: usize,
    pub samples_per_task: usize,
    pub test_tasks: usize,
    pub query_points: usize,
}

impl Default for SinusoidEnvConfig {
    fn default() -> Self {
        Self { n_tasks: 20, samples_per_task: 5, test_tasks: 20, query_points: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CauchyEnvConfig {
    pub n_tasks: usize,
    pub samples_per_task: usize,
    pub test_tasks: usize,
    pub query_points: usize,
}

impl Default for CauchyEnvConfig {
    fn default() -> Self {
        Self { n_tasks: 20, samples_per_task: 20, test_tasks: 20, query_points: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlrEnvConfig {
    pub n_tasks: usize,
    pub samples_per_task: usize,
    pub dim: usize,
    pub task_mean: f64,
    pub task_std: f64,
    pub input_std: f64,
    pub noise_std: f64,
    pub test_tasks: usize,
    pub query_points: usize,
}

impl Default for BlrEnvConfig {
    fn default() -> Self {
        Self {
            n_tasks: 20,
            samples_per_task: 5,
            dim: 5,
            task_mean: 0.2,
            task_std: 0.1,
            input_std: 1.0,
            noise_std: 1.0 / 3.0,
            test_tasks: 20,
            query_points: 100,
        }
    }
}

/// How classification labels are drawn from the task's linear score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// `y ~ Bernoulli(sigmoid(w·x))`
    Bernoulli,
    /// Deterministic `y = 1(w·x > 0)`
    Threshold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogregEnvConfig {
    pub n_tasks: usize,
    pub samples_per_task: usize,
    pub dim: usize,
    pub task_mean: f64,
    pub task_std: f64,
    pub label_mode: LabelMode,
    pub test_tasks: usize,
    pub query_points: usize,
}

impl Default for LogregEnvConfig {
    fn default() -> Self {
        Self {
            n_tasks: 20,
            samples_per_task: 5,
            dim: 2,
            task_mean: 10.0,
            task_std: 3.0,
            label_mode: LabelMode::Bernoulli,
            test_tasks: 20,
            query_points: 100,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn assemble(
    env: EnvDescriptor,
    seed: u64,
    n_tasks: usize,
    n_test: usize,
    mut gen: impl FnMut(u64, &mut RngStream) -> (TaskDataset, TaskDataset),
) -> MetaDataset {
    let root = RngStream::new(seed, 0);
    let mut train_tasks = Vec::with_capacity(n_tasks);
    let mut train_queries = Vec::with_capacity(n_tasks);
    for i in 0..n_tasks as u64 {
        let mut rng = root.fork(i);
        let (ctx, query) = gen(i, &mut rng);
        train_tasks.push(ctx);
        train_queries.push(query);
    }
    let mut test_tasks = Vec::with_capacity(n_test);
    for i in 0..n_test as u64 {
        let id = TEST_ID_OFFSET + i;
        let mut rng = root.fork(id);
        let (context, query) = gen(id, &mut rng);
        test_tasks.push(TestTask { context, query });
    }
    MetaDataset { schema_version: SCHEMA_VERSION, env, seed, train_tasks, train_queries, test_tasks }
}

/// Sinusoid function value for the given task parameters.
pub fn sinusoid_value(amplitude: f64, phase: f64, offset: f64, slope: f64, x: f64) -> f64 {
    slope * x + amplitude * (1.5 * (x - phase)).sin() + offset
}

/// Sinusoid-plus-affine environment.
pub fn gen_sinusoid_env(cfg: &SinusoidEnvConfig, seed: u64) -> MetaDataset {
    let c = cfg.clone();
    assemble(
        EnvDescriptor::Sinusoid(cfg.clone()),
        seed,
        cfg.n_tasks,
        cfg.test_tasks,
        move |id, rng| {
            let amplitude = rng.uniform_in(0.7, 1.3);
            let phase = 0.1 * rng.normal();
            let offset = 5.0 + 0.1 * rng.normal();
            let slope = 0.5 + 0.2 * rng.normal();
            let meta = TaskMeta::Sinusoid { amplitude, phase, offset, slope };
            let mut sample = |m: usize, id: u64| {
                let mut rows = Vec::with_capacity(m);
                let mut targets = Vec::with_capacity(m);
                for _ in 0..m {
                    let x = rng.uniform_in(-5.0, 5.0);
                    let y = sinusoid_value(amplitude, phase, offset, slope, x) + 0.1 * rng.normal();
                    rows.push(vec![x]);
                    targets.push(y);
                }
                TaskDataset {
                    task_id: id,
                    inputs: DenseMatrix::from_rows(&rows).expect("rows consistent"),
                    targets,
                    meta: Some(meta.clone()),
                }
            };
            (sample(c.samples_per_task, id), sample(c.query_points, id))
        },
    )
}

/// Unnormalized two-component Cauchy mixture used as the base function of the
/// Cauchy environment.
pub fn cauchy_mixture(x: &[f64]) -> f64 {
    let mu1 = [-1.0, -1.0];
    let mu2 = [2.0, 2.0];
    6.0 / (std::f64::consts::PI * (1.0 + sq_dist(x, &mu1)))
        + 3.0 / (std::f64::consts::PI * (1.0 + sq_dist(x, &mu2)))
}

fn se_kernel(a: &[f64], b: &[f64], lengthscale: f64) -> f64 {
    (-sq_dist(a, b) / (2.0 * lengthscale)).exp()
}

/// Cauchy-mixture environment: base mixture plus an exact GP draw with SE
/// kernel (lengthscale 0.2) over the task's own inputs, sampled jointly for
/// context and query so both share one function realization.
pub fn gen_cauchy_env(cfg: &CauchyEnvConfig, seed: u64) -> MetaDataset {
    gen_cauchy_env_with_gp_scale(cfg, seed, 1.0)
}

/// Same as [`gen_cauchy_env`] with the GP component scaled by `gp_scale`
/// (zero turns the environment into the deterministic mixture).
pub fn gen_cauchy_env_with_gp_scale(
    cfg: &CauchyEnvConfig,
    seed: u64,
    gp_scale: f64,
) -> MetaDataset {
    let c = cfg.clone();
    assemble(
        EnvDescriptor::Cauchy(cfg.clone()),
        seed,
        cfg.n_tasks,
        cfg.test_tasks,
        move |id, rng| {
            let total = c.samples_per_task + c.query_points;
            let mut rows = Vec::with_capacity(total);
            for _ in 0..total {
                let x: Vec<f64> = (0..2)
                    .map(|_| (2.5 * rng.normal()).clamp(-3.0, 2.0))
                    .collect();
                rows.push(x);
            }
            // Exact joint GP draw over all inputs of this task.
            let mut gram = DenseMatrix::zeros(total, total);
            for i in 0..total {
                for j in 0..=i {
                    let mut k = se_kernel(&rows[i], &rows[j], 0.2);
                    if i == j {
                        k += 1e-8;
                    }
                    gram.set(i, j, k);
                    gram.set(j, i, k);
                }
            }
            let solver = SpdSolver::new(&gram).expect("SE Gram matrix is SPD");
            let z = rng.normal_vec(total);
            let g = solver.correlate(&z);
            let targets: Vec<f64> = rows
                .iter()
                .zip(&g)
                .map(|(x, gi)| cauchy_mixture(x) + gp_scale * gi + 0.05 * rng.normal())
                .collect();
            let split = |lo: usize, hi: usize| TaskDataset {
                task_id: id,
                inputs: DenseMatrix::from_rows(&rows[lo..hi]).expect("rows consistent"),
                targets: targets[lo..hi].to_vec(),
                meta: None,
            };
            (split(0, c.samples_per_task), split(c.samples_per_task, total))
        },
    )
}

/// Linear-regression environment: `w* ~ N(task_mean·1, task_std² I)`,
/// `x ~ N(0, input_std² I)`, `y = w*·x + N(0, noise_std²)`.
pub fn gen_blr_env(cfg: &BlrEnvConfig, seed: u64) -> MetaDataset {
    let c = cfg.clone();
    assemble(
        EnvDescriptor::Blr(cfg.clone()),
        seed,
        cfg.n_tasks,
        cfg.test_tasks,
        move |id, rng| {
            let w: Vec<f64> =
                (0..c.dim).map(|_| c.task_mean + c.task_std * rng.normal()).collect();
            let mut sample = |m: usize| {
                let mut rows = Vec::with_capacity(m);
                let mut targets = Vec::with_capacity(m);
                for _ in 0..m {
                    let x: Vec<f64> = (0..c.dim).map(|_| c.input_std * rng.normal()).collect();
                    let y = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
                        + c.noise_std * rng.normal();
                    rows.push(x);
                    targets.push(y);
                }
                (rows, targets)
            };
            let (ctx_rows, ctx_y) = sample(c.samples_per_task);
            let (q_rows, q_y) = sample(c.query_points);
            let make = |rows: Vec<Vec<f64>>, targets: Vec<f64>| TaskDataset {
                task_id: id,
                inputs: DenseMatrix::from_rows(&rows).expect("rows consistent"),
                targets,
                meta: Some(TaskMeta::LinearWeights(w.clone())),
            };
            (make(ctx_rows, ctx_y), make(q_rows, q_y))
        },
    )
}

/// Logistic-classification environment: `w* ~ N(task_mean·1, task_std² I)`,
/// `x ~ U([-1,1]^d)`, labels per [`LabelMode`].
pub fn gen_logreg_env(cfg: &LogregEnvConfig, seed: u64) -> MetaDataset {
    let c = cfg.clone();
    assemble(
        EnvDescriptor::Logreg(cfg.clone()),
        seed,
        cfg.n_tasks,
        cfg.test_tasks,
        move |id, rng| {
            let w: Vec<f64> =
                (0..c.dim).map(|_| c.task_mean + c.task_std * rng.normal()).collect();
            let mut sample = |m: usize| {
                let mut rows = Vec::with_capacity(m);
                let mut targets = Vec::with_capacity(m);
                for _ in 0..m {
                    let x: Vec<f64> = (0..c.dim).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                    let score: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
                    let y = match c.label_mode {
                        LabelMode::Bernoulli => {
                            if rng.uniform() < sigmoid(score) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        LabelMode::Threshold => {
                            if score > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    };
                    rows.push(x);
                    targets.push(y);
                }
                (rows, targets)
            };
            let (ctx_rows, ctx_y) = sample(c.samples_per_task);
            let (q_rows, q_y) = sample(c.query_points);
            let make = |rows: Vec<Vec<f64>>, targets: Vec<f64>| TaskDataset {
                task_id: id,
                inputs: DenseMatrix::from_rows(&rows).expect("rows consistent"),
                targets,
                meta: Some(TaskMeta::LinearWeights(w.clone())),
            };
            (make(ctx_rows, ctx_y), make(q_rows, q_y))
        },
    )
}
