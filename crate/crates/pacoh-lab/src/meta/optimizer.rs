//! Per-coordinate step-size control for score-ascent updates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Applies updates along a supplied ascent direction, either plain or with
/// Adam-style adaptive moments.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, dim: usize) -> Self {
        Self { kind, lr, m: vec![0.0; dim], v: vec![0.0; dim], t: 0 }
    }

    /// In-place ascent step `params += update(direction)`.
    pub fn step(&mut self, params: &mut [f64], direction: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, d) in params.iter_mut().zip(direction) {
                    *p += self.lr * d;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let bc1 = 1.0 - BETA1.powi(self.t as i32);
                let bc2 = 1.0 - BETA2.powi(self.t as i32);
                for i in 0..params.len() {
                    let g = direction[i];
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    let mhat = self.m[i] / bc1;
                    let vhat = self.v[i] / bc2;
                    params[i] += self.lr * mhat / (vhat.sqrt() + EPS);
                }
            }
        }
    }
}
