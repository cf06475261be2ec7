//! Reproducible synthetic task generators: sinusoids, Cauchy-mixture
//! regression, linear-regression and logistic-classification environments,
//! and a synthetic candidate-pool bandit environment.
//!
//! Every generator is a pure function of `(config, seed)`: tasks are built
//! from per-task forked random streams, so generation order (or parallelism)
//! cannot change the result. Datasets serialize to a versioned JSON layout
//! with row-major matrices.

mod bandit;
mod generators;

pub use bandit::{gen_peptide_pool, BanditPool, PeptidePoolConfig};
pub use generators::{
    gen_blr_env, gen_cauchy_env, gen_logreg_env, gen_sinusoid_env, BlrEnvConfig, CauchyEnvConfig,
    LabelMode, LogregEnvConfig, SinusoidEnvConfig,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::DenseMatrix;

pub const SCHEMA_VERSION: u32 = 1;

/// Ground-truth information attached to a generated task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TaskMeta {
    /// True linear weight vector of the task.
    LinearWeights(Vec<f64>),
    /// Parameters of a sinusoid-plus-affine task function.
    Sinusoid { amplitude: f64, phase: f64, offset: f64, slope: f64 },
}

/// One task's input-output samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task_id: u64,
    pub inputs: DenseMatrix,
    pub targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<TaskMeta>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Sub-dataset with the selected rows, preserving order.
    pub fn subset(&self, idx: &[usize]) -> TaskDataset {
        TaskDataset {
            task_id: self.task_id,
            inputs: self.inputs.select_rows(idx),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.len() != self.inputs.rows() {
            return Err(Error::LengthMismatch {
                left: self.inputs.rows(),
                right: self.targets.len(),
            });
        }
        let finite = self.inputs.data().iter().chain(self.targets.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("task dataset entry".into()));
        }
        Ok(())
    }
}

/// Context/query pair for meta-testing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestTask {
    pub context: TaskDataset,
    pub query: TaskDataset,
}

/// Environment descriptor recorded alongside generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvDescriptor {
    Sinusoid(SinusoidEnvConfig),
    Cauchy(CauchyEnvConfig),
    Blr(BlrEnvConfig),
    Logreg(LogregEnvConfig),
}

/// A collection of train tasks (with held-out query sets) and test tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDataset {
    pub schema_version: u32,
    pub env: EnvDescriptor,
    pub seed: u64,
    pub train_tasks: Vec<TaskDataset>,
    /// Held-out query points for each train task, aligned with `train_tasks`.
    pub train_queries: Vec<TaskDataset>,
    pub test_tasks: Vec<TestTask>,
}

impl MetaDataset {
    pub fn n_tasks(&self) -> usize {
        self.train_tasks.len()
    }

    pub fn validate(&self) -> Result<()> {
        for t in self
            .train_tasks
            .iter()
            .chain(self.train_queries.iter())
            .chain(self.test_tasks.iter().flat_map(|t| [&t.context, &t.query]))
        {
            t.validate()?;
        }
        let train_ids: std::collections::HashSet<u64> =
            self.train_tasks.iter().map(|t| t.task_id).collect();
        if self.test_tasks.iter().any(|t| train_ids.contains(&t.context.task_id)) {
            return Err(Error::InvalidConfig("train/test task ids overlap".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("meta dataset serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ds: MetaDataset =
            serde_json::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        if ds.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema version {}",
                ds.schema_version
            )));
        }
        ds.validate()?;
        Ok(ds)
    }
}
