use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::ParamMap;
use super::{NeuralError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamWState {
    pub step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

/// One AdamW update with decoupled weight decay:
/// `w <- w - lr * wd * w - lr * m_hat / (sqrt(v_hat) + eps)`.
///
/// Parameters for which `trainable` is false are left untouched, including
/// by the decay.
pub fn adamw_step(
    params: &mut ParamMap,
    grads: &ParamMap,
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
    trainable: impl Fn(&str) -> bool,
) -> Result<(), NeuralError> {
    for (name, p) in params.iter() {
        let g = grads
            .get(name)
            .ok_or_else(|| NeuralError::ShapeMismatch(format!("no gradient for {name}")))?;
        if g.shape != p.shape {
            return Err(NeuralError::ShapeMismatch(format!(
                "gradient {:?} vs parameter {:?} for {name}",
                g.shape, p.shape
            )));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);

    for (name, p) in params.iter_mut() {
        if !trainable(name) {
            continue;
        }
        let g: &Tensor = &grads[name];
        let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; p.len()]);
        let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; p.len()]);
        for i in 0..p.len() {
            let gi = g.data[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let w = p.data[i];
            p.data[i] = w - lr * cfg.weight_decay * w - lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

/// Cosine annealing from `lr_max` at step 0 to `lr_min` at `total_steps`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total_steps == 0 {
        return lr_max;
    }
    let frac = step.min(total_steps) as f64 / total_steps as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}
