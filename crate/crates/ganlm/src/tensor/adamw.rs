//! AdamW: Adam with bias correction and decoupled weight decay.
//!
//! Update per parameter θ with gradient g at step t:
//!
//! ```text
//! m = β₁·m + (1-β₁)·g          v = β₂·v + (1-β₂)·g²
//! m̂ = m / (1-β₁ᵗ)              v̂ = v / (1-β₂ᵗ)
//! θ = θ - lr·( m̂ / (√v̂ + ε) + weight_decay·θ )
//! ```

use crate::error::{Error, Result};

use super::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            learning_rate: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamWConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamWConfig {
            learning_rate,
            ..Default::default()
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

/// Optimizer over a fixed, ordered parameter list.
#[derive(Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    states: Vec<AdamWState>,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &[Tensor]) -> Self {
        let states = params
            .iter()
            .map(|p| AdamWState {
                m: vec![0.0; p.numel()],
                v: vec![0.0; p.numel()],
                t: 0,
            })
            .collect();
        AdamW { config, states }
    }

    /// One update step. Parameters must be passed in the same order as at
    /// construction; a parameter with no gradient is treated as zero-gradient.
    pub fn step(&mut self, params: &[Tensor]) -> Result<()> {
        if params.len() != self.states.len() {
            return Err(Error::Contract(format!(
                "adamw step: {} params given, {} states held",
                params.len(),
                self.states.len()
            )));
        }
        for (param, state) in params.iter().zip(self.states.iter_mut()) {
            let grad = param.grad().unwrap_or_else(|| vec![0.0; param.numel()]);
            if grad.len() != state.m.len() {
                return Err(Error::Dimension {
                    op: "adamw_step",
                    lhs: param.shape(),
                    rhs: vec![state.m.len()],
                });
            }
            state.t += 1;
            let mut values = param.to_vec();
            adamw_update(&mut values, &grad, state, &self.config);
            param.set_values(&values)?;
        }
        Ok(())
    }
}

fn adamw_update(values: &mut [f64], grad: &[f64], state: &mut AdamWState, cfg: &AdamWConfig) {
    let bias1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bias2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for i in 0..values.len() {
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grad[i];
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bias1;
        let v_hat = state.v[i] / bias2;
        values[i] -=
            cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.epsilon) + cfg.weight_decay * values[i]);
    }
}
