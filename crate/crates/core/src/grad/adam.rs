//! Adam updates with bias correction.

use crate::error::{Error, Result};
use crate::grad::tensor::Tensor;

/// Optimizer hyperparameters. Defaults are the standard Adam settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam step over a flat parameter list.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut AdamState,
    hp: &AdamParams,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape("adam-step", &[params.len()], &[grads.len()]));
    }
    state.t += 1;
    let t = state.t as i32;
    let m_corr = 1.0 - hp.beta1.powi(t);
    let v_corr = 1.0 - hp.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        if p.shape() != g.shape() {
            return Err(Error::shape("adam-step", p.shape(), g.shape()));
        }
        let (pv, gv) = (p.values_mut(), g.values());
        let (mv, vv) = (m.values_mut(), v.values_mut());
        for i in 0..pv.len() {
            mv[i] = hp.beta1 * mv[i] + (1.0 - hp.beta1) * gv[i];
            vv[i] = hp.beta2 * vv[i] + (1.0 - hp.beta2) * gv[i] * gv[i];
            let m_hat = mv[i] / m_corr;
            let v_hat = vv[i] / v_corr;
            pv[i] -= hp.learning_rate * m_hat / (v_hat.sqrt() + hp.epsilon);
        }
    }
    Ok(())
}
