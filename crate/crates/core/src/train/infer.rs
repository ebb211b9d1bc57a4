use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::AleMode;
use crate::credal::{aggregate, interval_width, CredalReport};
use crate::data::Dataset;
use crate::decide::{logit_bounds, predict, LogitBounds};
use crate::error::Result;
use crate::heads::{combined_weights, forward_aleatoric, forward_heads_with, Mode};
use crate::linalg::Matrix;
use crate::model::EnsembleModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inference {
    pub class: usize,
    pub report: CredalReport,
    pub bounds: LogitBounds,
    /// `H × K` head probabilities.
    pub probs: Vec<Vec<f64>>,
}

/// Eval-mode inference with the per-head weights computed once.
pub struct Predictor<'a> {
    model: &'a EnsembleModel,
    weights: Vec<Matrix>,
}

impl<'a> Predictor<'a> {
    pub fn new(model: &'a EnsembleModel) -> Result<Self> {
        Ok(Self {
            model,
            weights: combined_weights(model)?,
        })
    }

    /// Heads and aleatoric head in eval mode, then aggregation, interval
    /// propagation and prediction from the mean. Without an aleatoric head the
    /// interval width stands in for aleatoric uncertainty.
    pub fn infer(&self, x: &[f64]) -> Result<Inference> {
        let m = self.model;
        let probs = forward_heads_with(m, &self.weights, x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0))?;
        let ale = forward_aleatoric(m, x)?;
        let mut report = aggregate(&probs, &ale)?;
        if m.ale_mode == AleMode::None {
            report.u_ale = interval_width(&report);
            report.sample_ale = report.u_ale.iter().sum::<f64>() / m.k as f64;
        }
        let bounds = logit_bounds(&m.w_cls, &m.b_cls, &report.lower, &report.upper)?;
        let class = predict(m, &report.mean)?;
        Ok(Inference {
            class,
            report,
            bounds,
            probs,
        })
    }
}

pub fn infer(model: &EnsembleModel, x: &[f64]) -> Result<(usize, CredalReport, LogitBounds)> {
    let out = Predictor::new(model)?.infer(x)?;
    Ok((out.class, out.report, out.bounds))
}

pub fn infer_dataset(model: &EnsembleModel, ds: &Dataset) -> Result<Vec<Inference>> {
    let p = Predictor::new(model)?;
    ds.examples.iter().map(|e| p.infer(&e.embedding)).collect()
}

pub fn accuracy(model: &EnsembleModel, ds: &Dataset) -> Result<f64> {
    if ds.is_empty() {
        return Ok(0.0);
    }
    let p = Predictor::new(model)?;
    let mut correct = 0usize;
    for e in &ds.examples {
        if p.infer(&e.embedding)?.class == e.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use crate::decide::class_logits;
    use crate::heads::forward_heads;
    use rand::Rng;

    fn trained_looking(seed: u64) -> EnsembleModel {
        let mut m = EnsembleModel::init(8, 3, 3, &TrainConfig { seed, ..TrainConfig::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for h in &mut m.heads {
            h.b = Matrix::from_fn(h.b.rows(), h.b.cols(), |_, _| rng.random_range(-0.3..0.3));
        }
        m.w_sigma = Matrix::from_fn(3, 8, |_, _| rng.random_range(-1.0..1.0));
        m
    }

    #[test]
    fn identical_heads_collapse_bounds() {
        let m = EnsembleModel::init(8, 3, 3, &TrainConfig::default()).unwrap();
        let x: Vec<f64> = (0..8).map(|i| i as f64 / 8.0 - 0.4).collect();
        let (class, report, bounds) = infer(&m, &x).unwrap();
        assert_eq!(report.lower, report.upper);
        assert_eq!(bounds.lower, bounds.upper);
        assert_eq!(class, predict(&m, &report.mean).unwrap());
    }

    #[test]
    fn mean_logits_lie_inside_bounds() {
        let m = trained_looking(4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, report, bounds) = infer(&m, &x).unwrap();
            for (j, z) in class_logits(&m, &report.mean).unwrap().into_iter().enumerate() {
                assert!(bounds.lower[j] <= z + 1e-12 && z <= bounds.upper[j] + 1e-12);
            }
        }
    }

    #[test]
    fn equals_manual_composition() {
        let m = trained_looking(9);
        let x: Vec<f64> = (0..8).map(|i| (i as f64).cos()).collect();
        let probs = forward_heads(&m, &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let report = aggregate(&probs, &forward_aleatoric(&m, &x).unwrap()).unwrap();
        let bounds = logit_bounds(&m.w_cls, &m.b_cls, &report.lower, &report.upper).unwrap();
        let class = predict(&m, &report.mean).unwrap();
        assert_eq!(infer(&m, &x).unwrap(), (class, report, bounds));
    }

    #[test]
    fn no_aleatoric_head_uses_interval_width() {
        let mut m = trained_looking(2);
        m.ale_mode = AleMode::None;
        let (_, report, _) = infer(&m, &[0.5; 8]).unwrap();
        assert_eq!(report.u_ale, interval_width(&report));
    }
}
