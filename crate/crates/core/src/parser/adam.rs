use serde::{Deserialize, Serialize};

use super::{GradientSet, ParserParams, Tensors, TENSOR_NAMES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    pub first_moment: Tensors,
    pub second_moment: Tensors,
}

impl OptimizerState {
    pub fn new(params: &ParserParams, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first_moment: Tensors::zeros_like(&params.tensors),
            second_moment: Tensors::zeros_like(&params.tensors),
        }
    }
}

/// The update was refused because a gradient entry is NaN or infinite.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonFiniteGradient {
    pub tensor: &'static str,
}

/// One bias-corrected Adam step. Nothing is modified when any gradient entry
/// is not finite.
pub fn apply_update(
    params: &mut ParserParams,
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<(), NonFiniteGradient> {
    for (name, g) in TENSOR_NAMES.iter().zip(grads.slices()) {
        if g.iter().any(|x| !x.is_finite()) {
            return Err(NonFiniteGradient { tensor: name });
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let correct1 = 1.0 - beta1.powi(t);
    let correct2 = 1.0 - beta2.powi(t);

    let params_s = params.tensors.slices_mut();
    let m_s = state.first_moment.slices_mut();
    let v_s = state.second_moment.slices_mut();
    for (((p, g), m), v) in params_s.into_iter().zip(grads.slices()).zip(m_s).zip(v_s) {
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / correct1;
            let v_hat = v[i] / correct2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
