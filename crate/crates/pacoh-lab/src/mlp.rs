//! Fixed-architecture fully-connected tanh networks with analytic forward and
//! backward passes. Parameters live in a flat vector with a canonical
//! layer-major layout (per layer: weights row-major, then biases), so the same
//! vector can serve as a point in prior/hyper-posterior space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Shape of a fully-connected tanh network with identity output activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be >= 1".into()));
        }
        Ok(Self { input_dim, hidden, output_dim })
    }

    /// Widths including input and output.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(self.output_dim);
        d
    }

    /// Total parameter count: sum over layers of `(fan_in + 1) * fan_out`.
    pub fn param_count(&self) -> usize {
        let dims = self.dims();
        dims.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameter".into()));
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch { expected: self.input_dim, got: x.len() });
        }
        Ok(())
    }

    /// Fan-in-scaled Gaussian initialization (std = 1/sqrt(fan_in), biases 0).
    pub fn init_params(&self, rng: &mut RngStream) -> Vec<f64> {
        let dims = self.dims();
        let mut params = Vec::with_capacity(self.param_count());
        for w in dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = 1.0 / (fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(std * rng.normal());
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        params
    }
}

/// Per-layer activations kept for the backward pass. `post[l]` is the input
/// to layer `l`; the final entry is the network output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace has at least the input layer")
    }
}

pub fn mlp_forward(arch: &MlpArchitecture, params: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    Ok(mlp_forward_traced(arch, params, x)?.output().to_vec())
}

pub fn mlp_forward_traced(
    arch: &MlpArchitecture,
    params: &[f64],
    x: &[f64],
) -> Result<ForwardTrace> {
    arch.check_params(params)?;
    arch.check_input(x)?;
    let dims = arch.dims();
    let n_layers = dims.len() - 1;
    let mut post = Vec::with_capacity(n_layers + 1);
    post.push(x.to_vec());
    let mut offset = 0;
    for l in 0..n_layers {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let w = &params[offset..offset + fan_in * fan_out];
        let b = &params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
        offset += (fan_in + 1) * fan_out;
        let input = &post[l];
        let mut out = Vec::with_capacity(fan_out);
        for o in 0..fan_out {
            let mut acc = b[o];
            let row = &w[o * fan_in..(o + 1) * fan_in];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            if l + 1 < n_layers {
                acc = acc.tanh();
            }
            out.push(acc);
        }
        post.push(out);
    }
    Ok(ForwardTrace { post })
}

/// Exact reverse-mode gradient of `upstreamᵀ · output` with respect to the
/// flat parameters and the input.
pub fn mlp_backward(
    arch: &MlpArchitecture,
    params: &[f64],
    trace: &ForwardTrace,
    upstream: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    arch.check_params(params)?;
    if upstream.len() != arch.output_dim {
        return Err(Error::DimensionMismatch { expected: arch.output_dim, got: upstream.len() });
    }
    let dims = arch.dims();
    let n_layers = dims.len() - 1;
    let mut grad = vec![0.0; params.len()];
    // Offsets of each layer's parameter block.
    let mut offsets = Vec::with_capacity(n_layers);
    let mut off = 0;
    for l in 0..n_layers {
        offsets.push(off);
        off += (dims[l] + 1) * dims[l + 1];
    }

    let mut delta = upstream.to_vec();
    for l in (0..n_layers).rev() {
        let (fan_in, fan_out) = (dims[l], dims[l + 1]);
        let off = offsets[l];
        let w = &params[off..off + fan_in * fan_out];
        let input = &trace.post[l];
        let output = &trace.post[l + 1];
        // Hidden layers apply tanh, so fold its derivative into delta.
        if l + 1 < n_layers {
            for o in 0..fan_out {
                delta[o] *= 1.0 - output[o] * output[o];
            }
        }
        // Parameter gradients: dW = delta · inputᵀ, db = delta.
        for o in 0..fan_out {
            let d = delta[o];
            let g = &mut grad[off + o * fan_in..off + (o + 1) * fan_in];
            for (gi, xi) in g.iter_mut().zip(input) {
                *gi += d * xi;
            }
            grad[off + fan_in * fan_out + o] += d;
        }
        // Propagate to the previous layer.
        let mut next = vec![0.0; fan_in];
        for o in 0..fan_out {
            let d = delta[o];
            let row = &w[o * fan_in..(o + 1) * fan_in];
            for (ni, wi) in next.iter_mut().zip(row) {
                *ni += d * wi;
            }
        }
        delta = next;
    }
    Ok((grad, delta))
}
