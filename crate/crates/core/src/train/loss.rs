//! Training objective and its analytic gradient.
//!
//! ```text
//! L = L_task + λ_c · L_concept + λ_a · L_ale
//! ```
//!
//! `L_task` is softmax cross-entropy of the classifier applied to the mean
//! head probabilities. `L_concept` is BCE of every head against every known
//! concept, divided by `H · K′` where `K′` counts known concept slots in the
//! batch. `L_ale` depends on the aleatoric mode; see [`AleMode`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AleMode, AleTarget};
use crate::data::Example;
use crate::error::{CredalError, Result};
use crate::heads::{combined_weights, dropout_mask, Mode};
use crate::linalg::{sigmoid, softmax, softplus, Matrix};
use crate::model::EnsembleModel;

/// Lower clamp for every probability that goes into a logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Floor on the heteroscedastic scale so the squared-residual term stays finite.
pub const MIN_SCALE: f64 = 1e-3;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub concept: f64,
    /// Negative values are possible in heteroscedastic mode, where this is a
    /// Gaussian negative log-likelihood.
    pub ale: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(task: f64, concept: f64, ale: f64, lambda_c: f64, lambda_a: f64) -> Self {
        Self {
            task,
            concept,
            ale,
            total: task + lambda_c * concept + lambda_a * ale,
        }
    }
}

/// Gradients for every trainable parameter; `W_p` is frozen and has none.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// Per head, shaped like `A_h`.
    pub a: Vec<Matrix>,
    /// Per head, shaped like `B_h`.
    pub b: Vec<Matrix>,
    pub w_sigma: Matrix,
    pub w_cls: Matrix,
    pub b_cls: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &EnsembleModel) -> Self {
        Self {
            a: model.heads.iter().map(|h| Matrix::zeros(h.a.rows(), h.a.cols())).collect(),
            b: model.heads.iter().map(|h| Matrix::zeros(h.b.rows(), h.b.cols())).collect(),
            w_sigma: Matrix::zeros(model.k, model.d),
            w_cls: Matrix::zeros(model.n_classes, model.k),
            b_cls: vec![0.0; model.n_classes],
        }
    }

    /// Named flat views, in the same order as [`trainable_slices_mut`].
    pub fn slices(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::with_capacity(2 * self.a.len() + 3);
        for (h, (a, b)) in self.a.iter().zip(&self.b).enumerate() {
            out.push((format!("head{h}.a"), a.as_slice()));
            out.push((format!("head{h}.b"), b.as_slice()));
        }
        out.push(("w_sigma".into(), self.w_sigma.as_slice()));
        out.push(("w_cls".into(), self.w_cls.as_slice()));
        out.push(("b_cls".into(), self.b_cls.as_slice()));
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|(_, s)| s.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Named mutable views of the trainable parameters.
pub fn trainable_slices_mut(model: &mut EnsembleModel) -> Vec<(String, &mut [f64])> {
    let mut out = Vec::with_capacity(2 * model.heads.len() + 3);
    for (h, head) in model.heads.iter_mut().enumerate() {
        out.push((format!("head{h}.a"), head.a.as_mut_slice()));
        out.push((format!("head{h}.b"), head.b.as_mut_slice()));
    }
    out.push(("w_sigma".into(), model.w_sigma.as_mut_slice()));
    out.push(("w_cls".into(), model.w_cls.as_mut_slice()));
    out.push(("b_cls".into(), model.b_cls.as_mut_slice()));
    out
}

/// Dropout multipliers, indexed `[example][head][coordinate]`.
pub type Masks = Vec<Vec<Vec<f64>>>;

/// Draws masks example by example and head by head.
pub fn draw_masks<R: Rng + ?Sized>(model: &EnsembleModel, n: usize, rng: &mut R) -> Masks {
    (0..n)
        .map(|_| {
            model
                .heads
                .iter()
                .map(|h| dropout_mask(model.d, h.config.dropout, rng))
                .collect()
        })
        .collect()
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// BCE with clamped `p`, and its derivative with respect to the logit behind `p`.
fn bce_with_logit_grad(p: f64, target: f64) -> (f64, f64) {
    let pc = clamp_prob(p);
    let loss = -(target * pc.ln() + (1.0 - target) * (1.0 - pc).ln());
    let grad = if pc == p { p - target } else { 0.0 };
    (loss, grad)
}

/// Target of the entropy mode: `2 · min(p̄, 1 − p̄)` of the mean prediction.
pub fn uncertainty_target(mean: f64) -> f64 {
    2.0 * mean.min(1.0 - mean)
}

struct Forward {
    inputs: Vec<Vec<f64>>,
    probs: Vec<Vec<f64>>,
    mean: Vec<f64>,
    ale_logits: Vec<f64>,
}

fn forward_example(model: &EnsembleModel, weights: &[Matrix], e: &Example, masks: Option<&[Vec<f64>]>) -> Result<Forward> {
    if e.embedding.len() != model.d {
        return Err(CredalError::DimensionMismatch {
            context: "embedding",
            expected: model.d,
            got: e.embedding.len(),
        });
    }
    let h = model.heads.len();
    let mut inputs = Vec::with_capacity(h);
    let mut probs = Vec::with_capacity(h);
    let mut mean = vec![0.0; model.k];
    for (i, w) in weights.iter().enumerate() {
        let x: Vec<f64> = match masks {
            Some(m) => e.embedding.iter().zip(&m[i]).map(|(a, b)| a * b).collect(),
            None => e.embedding.clone(),
        };
        let p: Vec<f64> = w.matvec(&x)?.into_iter().map(sigmoid).collect();
        mean.iter_mut().zip(&p).for_each(|(m, v)| *m += v / h as f64);
        inputs.push(x);
        probs.push(p);
    }
    let ale_logits = model.w_sigma.matvec(&e.embedding)?;
    Ok(Forward {
        inputs,
        probs,
        mean,
        ale_logits,
    })
}

/// Entropy-mode targets for each example, computed from the current heads.
pub fn uncertainty_targets(model: &EnsembleModel, batch: &[&Example], masks: Option<&Masks>) -> Result<Vec<Vec<f64>>> {
    let weights = combined_weights(model)?;
    batch
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let f = forward_example(model, &weights, e, masks.map(|m| m[i].as_slice()))?;
            Ok(f.mean.into_iter().map(uncertainty_target).collect())
        })
        .collect()
}

/// Loss and gradients for a batch with fixed dropout masks.
///
/// `fixed_targets` replaces the entropy-mode targets, which are otherwise
/// recomputed from the heads. They never carry gradient either way; fixing
/// them lets a finite-difference check see the same objective the analytic
/// gradient describes.
pub fn loss_and_gradients(
    model: &EnsembleModel,
    batch: &[&Example],
    masks: Option<&Masks>,
    fixed_targets: Option<&[Vec<f64>]>,
) -> Result<(LossBreakdown, Gradients)> {
    if batch.is_empty() {
        return Err(CredalError::EmptyDataset);
    }
    if let Some(m) = masks {
        if m.len() != batch.len() {
            return Err(CredalError::DimensionMismatch {
                context: "dropout masks",
                expected: batch.len(),
                got: m.len(),
            });
        }
    }
    let (n_heads, k) = (model.heads.len(), model.k);
    let hf = n_heads as f64;
    let n = batch.len() as f64;
    let lambda_c = model.config.lambda_c;
    let lambda_a = model.config.lambda_a;
    let weights = combined_weights(model)?;

    let known_slots: usize = batch
        .iter()
        .map(|e| e.concepts.iter().filter(|c| c.is_known()).count())
        .sum();
    if known_slots == 0 && lambda_c > 0.0 {
        log::warn!("batch has no supervised concepts; concept loss is 0");
    }
    let concept_norm = hf * known_slots.max(1) as f64;

    let mut grads = Gradients::zeros_like(model);
    // dL/dW_h accumulated over the batch, then pushed through the low-rank factors
    let mut head_weight_grads: Vec<Matrix> = (0..n_heads).map(|_| Matrix::zeros(k, model.d)).collect();
    let (mut task, mut concept, mut ale) = (0.0, 0.0, 0.0);

    for (i, e) in batch.iter().enumerate() {
        if e.label >= model.n_classes {
            return Err(CredalError::InvalidArgument(format!(
                "label {} out of range for {} classes",
                e.label, model.n_classes
            )));
        }
        let f = forward_example(model, &weights, e, masks.map(|m| m[i].as_slice()))?;

        let mut logits = model.w_cls.matvec(&f.mean)?;
        logits.iter_mut().zip(&model.b_cls).for_each(|(z, b)| *z += b);
        let q = softmax(&logits);
        let qy = q[e.label];
        let qyc = clamp_prob(qy);
        task -= qyc.ln() / n;
        let mut dlogits = vec![0.0; model.n_classes];
        if qyc == qy {
            for j in 0..model.n_classes {
                dlogits[j] = (q[j] - if j == e.label { 1.0 } else { 0.0 }) / n;
            }
        }
        grads.w_cls.add_outer(1.0, &dlogits, &f.mean);
        grads.b_cls.iter_mut().zip(&dlogits).for_each(|(g, d)| *g += d);
        let dmean = model.w_cls.tmatvec(&dlogits)?;

        // dL/dz for each head's concept logits
        let mut dz: Vec<Vec<f64>> = f
            .probs
            .iter()
            .map(|p| (0..k).map(|j| dmean[j] / hf * p[j] * (1.0 - p[j])).collect())
            .collect();

        for (h, p) in f.probs.iter().enumerate() {
            for j in 0..k {
                if let Some(c) = e.concepts[j].target() {
                    let (l, g) = bce_with_logit_grad(p[j], c);
                    concept += l / concept_norm;
                    dz[h][j] += lambda_c * g / concept_norm;
                }
            }
        }

        let mut dale = vec![0.0; k];
        match model.ale_mode {
            AleMode::SupervisedBce | AleMode::Entropy => {
                for j in 0..k {
                    let target = match model.ale_mode {
                        AleMode::SupervisedBce => match model.config.ale_target {
                            AleTarget::Binary => f64::from(u8::from(e.unknown_rate[j] > 0.5)),
                            AleTarget::Soft => e.unknown_rate[j],
                        },
                        _ => match fixed_targets {
                            Some(t) => t[i][j],
                            None => uncertainty_target(f.mean[j]),
                        },
                    };
                    let (l, g) = bce_with_logit_grad(sigmoid(f.ale_logits[j]), target);
                    ale += l / (n * k as f64);
                    dale[j] = lambda_a * g / (n * k as f64);
                }
            }
            AleMode::Heteroscedastic => {
                for j in 0..k {
                    let Some(c) = e.concepts[j].target() else {
                        continue;
                    };
                    let raw = softplus(f.ale_logits[j]);
                    let scale = raw.max(MIN_SCALE);
                    let var = scale * scale;
                    let mut dscale = 0.0;
                    for (h, p) in f.probs.iter().enumerate() {
                        let r = p[j] - c;
                        ale += (r * r / (2.0 * var) + 0.5 * var.ln()) / concept_norm;
                        dz[h][j] += lambda_a * (r / var) * p[j] * (1.0 - p[j]) / concept_norm;
                        dscale += (-r * r / (var * scale) + 1.0 / scale) / concept_norm;
                    }
                    if raw > MIN_SCALE {
                        // softplus' = sigmoid
                        dale[j] = lambda_a * dscale * sigmoid(f.ale_logits[j]);
                    }
                }
            }
            AleMode::None => {}
        }
        grads.w_sigma.add_outer(1.0, &dale, &e.embedding);

        for (h, g) in dz.iter().enumerate() {
            head_weight_grads[h].add_outer(1.0, g, &f.inputs[h]);
        }
    }

    for (h, head) in model.heads.iter().enumerate() {
        let s = head.config.scale();
        // W_h = W_p + s·B·A  ⇒  dB = s·dW·Aᵀ,  dA = s·Bᵀ·dW
        let mut gb = head_weight_grads[h].matmul(&head.a.transpose())?;
        gb.scale(s);
        let mut ga = head.b.transpose().matmul(&head_weight_grads[h])?;
        ga.scale(s);
        grads.a[h] = ga;
        grads.b[h] = gb;
    }

    Ok((LossBreakdown::combine(task, concept, ale, lambda_c, lambda_a), grads))
}

fn masks_for<R: Rng + ?Sized>(model: &EnsembleModel, n: usize, mode: Mode, rng: &mut R) -> Option<Masks> {
    match mode {
        Mode::Train => Some(draw_masks(model, n, rng)),
        Mode::Eval => None,
    }
}

pub fn total_loss<R: Rng + ?Sized>(model: &EnsembleModel, batch: &[&Example], mode: Mode, rng: &mut R) -> Result<LossBreakdown> {
    backward(model, batch, mode, rng).map(|(l, _)| l)
}

/// Loss and analytic gradients. Train mode draws fresh dropout masks from `rng`.
pub fn backward<R: Rng + ?Sized>(
    model: &EnsembleModel,
    batch: &[&Example],
    mode: Mode,
    rng: &mut R,
) -> Result<(LossBreakdown, Gradients)> {
    let masks = masks_for(model, batch.len(), mode, rng);
    loss_and_gradients(model, batch, masks.as_ref(), None)
}
