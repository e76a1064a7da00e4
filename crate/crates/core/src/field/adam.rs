use serde::{Deserialize, Serialize};

use super::model::{FieldModel, GradientSet};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// First and second moment estimates for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &FieldModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.params.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn matches(&self, model: &FieldModel) -> bool {
        self.m.len() == model.params.len()
            && self.v.len() == model.params.len()
            && model
                .params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.data.len() == m.len() && p.data.len() == v.len())
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(model: &mut FieldModel, grads: &GradientSet, state: &mut AdamState, lr: f64) -> Result<()> {
    if !state.matches(model)
        || grads.grads.len() != model.params.len()
        || model
            .params
            .iter()
            .zip(&grads.grads)
            .any(|(p, g)| p.data.len() != g.len())
    {
        return Err(Error::ShapeMismatch("optimizer state or gradients do not match model".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for ((p, g), (m, v)) in model
        .params
        .iter_mut()
        .zip(&grads.grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for i in 0..p.data.len() {
            let gi = g[i];
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p.data[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
        }
    }
    Ok(())
}
