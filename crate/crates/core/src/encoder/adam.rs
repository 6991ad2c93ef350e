use serde::{Deserialize, Serialize};

use super::params::EncoderParams;
use super::tape::Gradients;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let zeros = || {
            params
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows, t.cols))
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// Pads moment rows after vocabulary growth.
    pub fn sync_shapes(&mut self, params: &EncoderParams) {
        for ((m, v), p) in self.m.iter_mut().zip(&mut self.v).zip(&params.tensors) {
            if m.rows < p.rows {
                let extra = p.rows - m.rows;
                m.grow_rows(extra);
                v.grow_rows(extra);
            }
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut EncoderParams, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    state.sync_shapes(params);
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (k, p) in params.tensors.iter_mut().enumerate() {
        let g = &grads.tensors[k].data;
        let m = &mut state.m[k].data;
        let v = &mut state.v[k].data;
        for i in 0..p.data.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.data[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
