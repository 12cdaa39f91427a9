use serde::{Deserialize, Serialize};

use super::{ModelError, Result, Tensor, TrainState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every parameter tensor in `state`.
/// `grads` follows [`super::Network::param_names`] order.
pub fn adam_step(state: &mut TrainState, grads: &[Tensor], p: &AdamParams) -> Result<()> {
    let names = state.network.param_names();
    if grads.len() != names.len() {
        return Err(ModelError::ShapeMismatch(format!(
            "{} gradient tensors for {} parameters",
            grads.len(),
            names.len()
        )));
    }
    {
        let params = state.network.params();
        for ((g, w), name) in grads.iter().zip(&params).zip(&names) {
            if g.shape() != w.shape() {
                return Err(ModelError::ShapeMismatch(format!(
                    "gradient for `{name}` has shape {:?}, parameter {:?}",
                    g.shape(),
                    w.shape()
                )));
            }
            if !g.is_finite() {
                return Err(ModelError::NonFiniteGradient(name.clone()));
            }
        }
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - p.beta1.powf(t);
    let c2 = 1.0 - p.beta2.powf(t);
    let params = state.network.params_mut();
    for (((w, g), m), v) in params
        .into_iter()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for (((w, &g), m), v) in w
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *m = p.beta1 * *m + (1.0 - p.beta1) * g;
            *v = p.beta2 * *v + (1.0 - p.beta2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *w -= p.lr * mh / (vh.sqrt() + p.eps);
        }
    }
    Ok(())
}
