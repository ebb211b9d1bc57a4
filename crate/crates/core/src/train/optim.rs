//! AdamW with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{CredalError, Result};
use crate::model::EnsembleModel;

use super::loss::{trainable_slices_mut, Gradients};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    /// First moments, one buffer per parameter block.
    pub m: Vec<Vec<f64>>,
    /// Second moments.
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(sizes: &[usize]) -> Self {
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn for_model(model: &EnsembleModel) -> Self {
        let sizes: Vec<usize> = Gradients::zeros_like(model)
            .slices()
            .iter()
            .map(|(_, s)| s.len())
            .collect();
        Self::new(&sizes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub clip: f64,
}

/// One AdamW update over named parameter blocks. Returns the gradient norm
/// measured before clipping.
///
/// Gradients are scaled by `clip / ‖g‖` when the global norm exceeds `clip`.
/// Weight decay is decoupled: `θ ← θ(1 − lr·wd)` before the Adam step.
pub fn adamw_step(
    params: &mut [(String, &mut [f64])],
    grads: &[(String, &[f64])],
    state: &mut OptimizerState,
    hp: AdamWParams,
) -> Result<f64> {
    if params.len() != grads.len() || state.m.len() != grads.len() {
        return Err(CredalError::DimensionMismatch {
            context: "optimizer parameter blocks",
            expected: params.len(),
            got: grads.len(),
        });
    }
    for ((name, g), (_, p)) in grads.iter().zip(params.iter()) {
        if g.len() != p.len() {
            return Err(CredalError::DimensionMismatch {
                context: "optimizer block length",
                expected: p.len(),
                got: g.len(),
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(CredalError::NonFiniteGradient(name.clone()));
        }
    }
    let norm = grads
        .iter()
        .flat_map(|(_, g)| g.iter())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt();
    let factor = if norm > hp.clip { hp.clip / norm } else { 1.0 };

    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - BETA1.powi(t);
    let bias2 = 1.0 - BETA2.powi(t);
    for (block, ((_, p), (_, g))) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[block], &mut state.v[block]);
        for i in 0..p.len() {
            let gi = g[i] * factor;
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            p[i] *= 1.0 - hp.lr * hp.weight_decay;
            p[i] -= hp.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(norm)
}

/// Applies [`adamw_step`] to every trainable parameter of `model`.
pub fn adamw_model_step(
    model: &mut EnsembleModel,
    grads: &Gradients,
    state: &mut OptimizerState,
    hp: AdamWParams,
) -> Result<f64> {
    let g = grads.slices();
    let mut p = trainable_slices_mut(model);
    adamw_step(&mut p, &g, state, hp)
}
