use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, TAU_MAX, TAU_MIN};
use crate::embed::EncoderParams;
use crate::{Error, Result};

/// First and second moments per tensor, in [`EncoderParams::tensors`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.data.len()]).collect();
        Self { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One bias-corrected Adam update of a single tensor at (1-based) step `t`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one Adam step to every trainable tensor. Frozen tensors and their
/// moments are left untouched. A learnable temperature is clamped to
/// [`TAU_MIN`, `TAU_MAX`] afterwards.
pub fn adam_step(
    params: &mut EncoderParams,
    grads: &EncoderParams,
    state: &mut AdamState,
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    params.check_same_layout(grads)?;
    let n_tensors = params.tensors().len();
    if state.m.len() != n_tensors || state.v.len() != n_tensors {
        return Err(Error::Shape("optimizer state does not match the parameters".into()));
    }
    let trainable: Vec<bool> = params.tensors().iter().map(|t| config.is_trainable(t.group, params)).collect();
    state.step += 1;
    let t = state.step;
    let adam = config.adam;
    let grad_tensors = grads.tensors();
    for (i, tensor) in params.tensors_mut().into_iter().enumerate() {
        if !trainable[i] {
            continue;
        }
        adam_update(tensor.data, grad_tensors[i].data, &mut state.m[i], &mut state.v[i], t, lr, adam.beta1, adam.beta2, adam.eps);
    }
    if config.tau.is_learnable() {
        params.log_tau = params.log_tau.clamp(TAU_MIN.ln(), TAU_MAX.ln());
    }
    Ok(())
}
