//! Forward passes of the concept heads and the aleatoric head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::AleMode;
use crate::error::{CredalError, Result};
use crate::linalg::{sigmoid, softplus, Matrix};
use crate::model::{EnsembleModel, LoraHead};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Per-head inverted dropout on the embedding.
    Train,
    /// Deterministic, no dropout.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadOutput {
    /// `H × K` concept probabilities.
    pub probs: Vec<Vec<f64>>,
    /// Length-K aleatoric output.
    pub ale: Vec<f64>,
}

/// `ΔW_h = (α_h / r_h) · B_h · A_h`, a `K × d` matrix.
pub fn effective_weight(head: &LoraHead) -> Result<Matrix> {
    let mut w = head.b.matmul(&head.a)?;
    w.scale(head.config.scale());
    Ok(w)
}

/// `W_p + ΔW_h` for every head.
pub fn combined_weights(model: &EnsembleModel) -> Result<Vec<Matrix>> {
    model
        .heads
        .iter()
        .map(|h| {
            let mut w = effective_weight(h)?;
            w.add_assign(&model.base)?;
            Ok(w)
        })
        .collect()
}

/// Inverted-dropout multipliers: each coordinate is 0 with probability `rate`,
/// otherwise `1 / (1 − rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(d: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; d];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..d)
        .map(|_| if rng.random_bool(rate) { 0.0 } else { keep })
        .collect()
}

fn check_embedding(model: &EnsembleModel, x: &[f64]) -> Result<()> {
    if x.len() != model.d {
        return Err(CredalError::DimensionMismatch {
            context: "embedding",
            expected: model.d,
            got: x.len(),
        });
    }
    Ok(())
}

/// Concept probabilities of every head, `H × K`, using precomputed head weights.
///
/// In train mode the masks are drawn head by head, `d` draws each, so a fixed
/// rng state always yields the same masks.
pub fn forward_heads_with<R: Rng + ?Sized>(
    model: &EnsembleModel,
    weights: &[Matrix],
    x: &[f64],
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    check_embedding(model, x)?;
    model
        .heads
        .iter()
        .zip(weights)
        .map(|(head, w)| {
            let z = match mode {
                Mode::Eval => w.matvec(x)?,
                Mode::Train => {
                    let mask = dropout_mask(model.d, head.config.dropout, rng);
                    let xt: Vec<f64> = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
                    w.matvec(&xt)?
                }
            };
            Ok(z.into_iter().map(sigmoid).collect())
        })
        .collect()
}

pub fn forward_heads<R: Rng + ?Sized>(
    model: &EnsembleModel,
    x: &[f64],
    mode: Mode,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let weights = combined_weights(model)?;
    forward_heads_with(model, &weights, x, mode, rng)
}

/// Raw aleatoric head output: sigmoid of `W_σ h`, or softplus in
/// heteroscedastic mode.
pub fn forward_aleatoric(model: &EnsembleModel, x: &[f64]) -> Result<Vec<f64>> {
    check_embedding(model, x)?;
    let z = model.w_sigma.matvec(x)?;
    Ok(match model.ale_mode {
        AleMode::Heteroscedastic => z.into_iter().map(softplus).collect(),
        _ => z.into_iter().map(sigmoid).collect(),
    })
}

pub fn forward<R: Rng + ?Sized>(
    model: &EnsembleModel,
    x: &[f64],
    mode: Mode,
    rng: &mut R,
) -> Result<HeadOutput> {
    Ok(HeadOutput {
        probs: forward_heads(model, x, mode, rng)?,
        ale: forward_aleatoric(model, x)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(d: usize, k: usize, heads: usize) -> EnsembleModel {
        let cfg = TrainConfig {
            heads,
            ranks: vec![1, 2, 3],
            ..TrainConfig::default()
        };
        EnsembleModel::init(d, k, 2, &cfg).unwrap()
    }

    fn zero_all(m: &mut EnsembleModel) {
        m.base.scale(0.0);
        m.w_sigma.scale(0.0);
        for h in &mut m.heads {
            h.a.scale(0.0);
            h.b.scale(0.0);
        }
    }

    #[test]
    fn zero_b_gives_zero_update() {
        let m = model(6, 2, 3);
        for h in &m.heads {
            assert!(effective_weight(h).unwrap().as_slice().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn rank_four_alpha_eight_scales_by_two() {
        let cfg = TrainConfig::default();
        let m = EnsembleModel::init(64, 2, 2, &cfg).unwrap();
        assert_eq!(m.heads[0].config.rank, 4);
        assert_eq!(m.heads[0].config.scale(), 2.0);
    }

    #[test]
    fn rank_one_outer_product() {
        let mut m = model(3, 2, 1);
        let h = &mut m.heads[0];
        h.a = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        h.b = Matrix::from_rows(&[vec![0.5], vec![-1.0]]).unwrap();
        h.config.alpha = 3.0; // rank 1 → scale 3
        let w = effective_weight(h).unwrap();
        let expected = [1.5, 3.0, 4.5, -3.0, -6.0, -9.0];
        for (a, e) in w.as_slice().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn scaling_alpha_scales_update() {
        let mut m = model(5, 2, 2);
        m.heads[1].b = Matrix::from_fn(2, 2, |i, j| (i + 2 * j) as f64 - 1.5);
        let before = effective_weight(&m.heads[1]).unwrap();
        m.heads[1].config.alpha *= 3.0;
        let after = effective_weight(&m.heads[1]).unwrap();
        for (a, b) in after.as_slice().iter().zip(before.as_slice()) {
            assert!((a - 3.0 * b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn all_zero_parameters_give_one_half() {
        let mut m = model(4, 3, 3);
        zero_all(&mut m);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(&m, &[0.3, -1.0, 2.0, 0.5], Mode::Train, &mut rng).unwrap();
        assert!(out.probs.iter().flatten().all(|&p| p == 0.5));
        assert!(out.ale.iter().all(|&p| p == 0.5));
    }

    #[test]
    fn heteroscedastic_zero_gives_ln2() {
        let mut m = model(4, 3, 1);
        m.ale_mode = AleMode::Heteroscedastic;
        let ale = forward_aleatoric(&m, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        for a in ale {
            assert!((a - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn aleatoric_matches_hand_evaluation() {
        let mut m = model(3, 2, 1);
        m.w_sigma = Matrix::from_rows(&[vec![1.0, -2.0, 0.5], vec![0.0, 1.0, 1.0]]).unwrap();
        let x = [0.2, 0.1, -0.4];
        // row 0: 0.2 - 0.2 - 0.2 = -0.2, row 1: 0.1 - 0.4 = -0.3
        let sig = forward_aleatoric(&m, &x).unwrap();
        assert!((sig[0] - 1.0 / (1.0 + 0.2f64.exp())).abs() < 1e-15);
        assert!((sig[1] - 1.0 / (1.0 + 0.3f64.exp())).abs() < 1e-15);
        m.ale_mode = AleMode::Heteroscedastic;
        let sp = forward_aleatoric(&m, &x).unwrap();
        assert!((sp[0] - (1.0 + (-0.2f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn unit_row_gives_sigmoid_one() {
        let mut m = model(4, 1, 1);
        zero_all(&mut m);
        m.base = Matrix::from_rows(&[vec![1.0; 4]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = forward_heads(&m, &[1.0, 0.0, 0.0, 0.0], Mode::Eval, &mut rng).unwrap();
        assert!((p[0][0] - 0.731_058_578_630_004_9).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut m = model(6, 2, 3);
        m.heads[2].b = Matrix::from_fn(2, 3, |i, j| 0.1 * (i as f64 - j as f64));
        let x = [0.5, -0.2, 0.1, 0.9, -1.0, 0.3];
        let a = forward_heads(&m, &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = forward_heads(&m, &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_init_heads_are_identical() {
        let m = model(8, 3, 3);
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).sin()).collect();
        let p = forward_heads(&m, &x, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(p.iter().all(|row| row == &p[0]));
        let base: Vec<f64> = m.base.matvec(&x).unwrap().into_iter().map(sigmoid).collect();
        assert_eq!(p[0], base);
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = [1.0, -2.0, 0.5, 3.0];
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sum = [0.0; 4];
        for _ in 0..draws {
            let mask = dropout_mask(4, 0.3, &mut rng);
            for i in 0..4 {
                sum[i] += x[i] * mask[i];
            }
        }
        for i in 0..4 {
            let mean = sum[i] / draws as f64;
            assert!((mean - x[i]).abs() <= 0.01 * x[i].abs(), "{mean} vs {}", x[i]);
        }
    }

    #[test]
    fn wrong_embedding_length_errors() {
        let m = model(6, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(forward_heads(&m, &[0.0; 5], Mode::Eval, &mut rng).is_err());
        assert!(forward_aleatoric(&m, &[0.0; 7]).is_err());
    }
}
