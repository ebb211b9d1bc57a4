//! Interval propagation through the linear classifier, imprecise decision
//! rules, and quadrant routing.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CredalError, Result};
use crate::linalg::{argmax, dot, sigmoid, Matrix};
use crate::model::EnsembleModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogitBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LogitBounds {
    pub fn n_classes(&self) -> usize {
        self.lower.len()
    }
}

fn check_box(w: &Matrix, b: &[f64], lower: &[f64], upper: &[f64]) -> Result<()> {
    let (rows, cols) = w.shape();
    let checks = [
        ("classifier bias", rows, b.len()),
        ("concept lower bounds", cols, lower.len()),
        ("concept upper bounds", cols, upper.len()),
    ];
    for (context, expected, got) in checks {
        if expected != got {
            return Err(CredalError::DimensionMismatch {
                context,
                expected,
                got,
            });
        }
    }
    Ok(())
}

/// Exact range of `w · p + b` over the box `lower ≤ p ≤ upper`.
///
/// Positive weights take the lower corner for the minimum and the upper corner
/// for the maximum; negative weights the reverse. Zero weights contribute nothing.
pub fn affine_range(w: &[f64], b: f64, lower: &[f64], upper: &[f64]) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for ((&wk, &l), &u) in w.iter().zip(lower).zip(upper) {
        if wk > 0.0 {
            lo += wk * l;
            hi += wk * u;
        } else if wk < 0.0 {
            lo += wk * u;
            hi += wk * l;
        }
    }
    (lo + b, hi + b)
}

pub fn logit_bounds(w: &Matrix, b: &[f64], lower: &[f64], upper: &[f64]) -> Result<LogitBounds> {
    check_box(w, b, lower, upper)?;
    let (lo, hi) = (0..w.rows())
        .map(|j| affine_range(w.row(j), b[j], lower, upper))
        .unzip();
    Ok(LogitBounds { lower: lo, upper: hi })
}

/// Probability interval per class for a two-class model, `[σ(ℓ̲), σ(ℓ̄)]`.
pub fn probability_bounds(bounds: &LogitBounds) -> Result<Vec<(f64, f64)>> {
    if bounds.n_classes() > 2 {
        return Err(CredalError::InvalidArgument(format!(
            "probability bounds are defined for binary models only, got {} classes",
            bounds.n_classes()
        )));
    }
    Ok(bounds
        .lower
        .iter()
        .zip(&bounds.upper)
        .map(|(&l, &u)| (sigmoid(l), sigmoid(u)))
        .collect())
}

pub fn class_logits(model: &EnsembleModel, concepts: &[f64]) -> Result<Vec<f64>> {
    let mut z = model.w_cls.matvec(concepts)?;
    z.iter_mut().zip(&model.b_cls).for_each(|(zi, bi)| *zi += bi);
    Ok(z)
}

/// Class chosen from the mean concept probabilities; ties go to the lowest index.
pub fn predict(model: &EnsembleModel, mean: &[f64]) -> Result<usize> {
    Ok(argmax(&class_logits(model, mean)?))
}

/// Class with the largest worst-case logit.
pub fn gamma_maximin(bounds: &LogitBounds) -> usize {
    argmax(&bounds.lower)
}

/// Classes not dominated anywhere on the concept box.
///
/// `j` is dropped when some `j′` has `ℓ_{j′} − ℓ_j > 0` at every point of the
/// box. The minimum of that difference is exact because the difference is
/// itself affine in the concepts.
pub fn maximal_labels(w: &Matrix, b: &[f64], lower: &[f64], upper: &[f64]) -> Result<Vec<usize>> {
    check_box(w, b, lower, upper)?;
    let n = w.rows();
    let dominated = |j: usize| {
        (0..n).any(|other| {
            if other == j {
                return false;
            }
            let diff: Vec<f64> = w.row(other).iter().zip(w.row(j)).map(|(a, c)| a - c).collect();
            affine_range(&diff, b[other] - b[j], lower, upper).0 > 0.0
        })
    };
    Ok((0..n).filter(|&j| !dominated(j)).collect())
}

/// Classes that win for at least one head's concept vector or for the mean.
///
/// This checks the extreme points supplied by the heads only, so it can miss
/// classes that win somewhere else in the credal set.
pub fn e_admissible_labels(model: &EnsembleModel, probs: &[Vec<f64>]) -> Result<Vec<usize>> {
    let first = probs.first().ok_or(CredalError::EmptyEnsemble)?;
    let k = first.len();
    let mut mean = vec![0.0; k];
    let mut winners = Vec::with_capacity(probs.len() + 1);
    for p in probs {
        winners.push(predict(model, p)?);
        mean.iter_mut().zip(p).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= probs.len() as f64);
    winners.push(predict(model, &mean)?);
    winners.sort_unstable();
    winners.dedup();
    Ok(winners)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Quadrant {
    /// Low epistemic, low aleatoric.
    Trust,
    /// High epistemic, low aleatoric: the model is unsure about a clear input.
    Data,
    /// Low epistemic, high aleatoric: the input itself is ambiguous.
    Review,
    /// Both high.
    Abstain,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [Quadrant::Trust, Quadrant::Data, Quadrant::Review, Quadrant::Abstain];
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quadrant::Trust => "TRUST",
            Quadrant::Data => "DATA",
            Quadrant::Review => "REVIEW",
            Quadrant::Abstain => "ABSTAIN",
        })
    }
}

impl FromStr for Quadrant {
    type Err = CredalError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TRUST" => Ok(Quadrant::Trust),
            "DATA" => Ok(Quadrant::Data),
            "REVIEW" => Ok(Quadrant::Review),
            "ABSTAIN" => Ok(Quadrant::Abstain),
            other => Err(CredalError::InvalidArgument(format!("unknown quadrant '{other}'"))),
        }
    }
}

/// Values equal to a threshold count as low.
pub fn assign_quadrant(sample_epi: f64, sample_ale: f64, epi_threshold: f64, ale_threshold: f64) -> Quadrant {
    match (sample_epi > epi_threshold, sample_ale > ale_threshold) {
        (false, false) => Quadrant::Trust,
        (true, false) => Quadrant::Data,
        (false, true) => Quadrant::Review,
        (true, true) => Quadrant::Abstain,
    }
}

/// Point logits `W p + b` for a plain weight matrix and bias.
pub fn point_logits(w: &Matrix, b: &[f64], p: &[f64]) -> Vec<f64> {
    (0..w.rows()).map(|j| dot(w.row(j), p) + b[j]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TrainConfig;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn corners(w: &Matrix, b: &[f64], lower: &[f64], upper: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k = lower.len();
        let n = w.rows();
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for mask in 0u32..(1 << k) {
            let p: Vec<f64> = (0..k)
                .map(|i| if mask >> i & 1 == 1 { upper[i] } else { lower[i] })
                .collect();
            for (j, z) in point_logits(w, b, &p).into_iter().enumerate() {
                lo[j] = lo[j].min(z);
                hi[j] = hi[j].max(z);
            }
        }
        (lo, hi)
    }

    fn random_box(rng: &mut ChaCha8Rng, k: usize) -> (Vec<f64>, Vec<f64>) {
        (0..k)
            .map(|_| {
                let a: f64 = rng.random();
                let c: f64 = rng.random();
                (a.min(c), a.max(c))
            })
            .unzip()
    }

    #[test]
    fn hand_computed_two_concept_bounds() {
        let w = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        let lb = logit_bounds(&w, &[0.0], &[0.2, 0.1], &[0.4, 0.3]).unwrap();
        assert!((lb.lower[0] - -0.1).abs() < 1e-15);
        assert!((lb.upper[0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn degenerate_box_gives_point_logits() {
        let w = Matrix::from_rows(&[vec![0.5, -2.0, 0.0], vec![1.5, 0.25, -1.0]]).unwrap();
        let b = [0.1, -0.3];
        let p = [0.3, 0.8, 0.5];
        let lb = logit_bounds(&w, &b, &p, &p).unwrap();
        let z = point_logits(&w, &b, &p);
        assert_eq!(lb.lower, z);
        assert_eq!(lb.upper, z);
    }

    #[test]
    fn bounds_match_corner_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w = Matrix::from_fn(3, 6, |_, _| rng.random_range(-2.0..2.0));
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lower, upper) = random_box(&mut rng, 6);
            let lb = logit_bounds(&w, &b, &lower, &upper).unwrap();
            let (lo, hi) = corners(&w, &b, &lower, &upper);
            for j in 0..3 {
                assert!((lb.lower[j] - lo[j]).abs() < 1e-9);
                assert!((lb.upper[j] - hi[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let w = Matrix::zeros(2, 3);
        assert!(logit_bounds(&w, &[0.0], &[0.0; 3], &[0.0; 3]).is_err());
        assert!(logit_bounds(&w, &[0.0; 2], &[0.0; 2], &[0.0; 3]).is_err());
    }

    #[test]
    fn sigmoid_probability_bounds() {
        let pb = probability_bounds(&LogitBounds { lower: vec![0.0, -1.0], upper: vec![0.0, 1.0] }).unwrap();
        assert_eq!(pb[0], (0.5, 0.5));
        assert!((pb[1].0 - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert!((pb[1].1 - 0.731_058_578_630_004_9).abs() < 1e-12);
        let three = LogitBounds { lower: vec![0.0; 3], upper: vec![0.0; 3] };
        assert!(probability_bounds(&three).is_err());
    }

    #[test]
    fn widening_logits_never_narrows_probabilities() {
        let narrow = probability_bounds(&LogitBounds { lower: vec![-0.5], upper: vec![0.4] }).unwrap();
        let wide = probability_bounds(&LogitBounds { lower: vec![-0.9], upper: vec![0.7] }).unwrap();
        assert!(wide[0].0 <= narrow[0].0 && wide[0].1 >= narrow[0].1);
    }

    fn tiny_model(w: Matrix, b: Vec<f64>) -> EnsembleModel {
        let (n, k) = w.shape();
        let mut m = EnsembleModel::init(4, k, n.max(2), &TrainConfig { heads: 2, ..TrainConfig::default() }).unwrap();
        m.n_classes = n;
        m.w_cls = w;
        m.b_cls = b;
        m
    }

    #[test]
    fn predict_argmax_and_ties() {
        let m = tiny_model(Matrix::zeros(3, 1), vec![0.1, 0.9, 0.3]);
        assert_eq!(predict(&m, &[0.5]).unwrap(), 1);
        let tie = tiny_model(Matrix::zeros(2, 1), vec![0.5, 0.5]);
        assert_eq!(predict(&tie, &[0.2]).unwrap(), 0);
        let mut shifted = tiny_model(Matrix::from_rows(&[vec![1.0], vec![-1.0], vec![0.3]]).unwrap(), vec![0.0; 3]);
        let before = predict(&shifted, &[0.7]).unwrap();
        shifted.b_cls.iter_mut().for_each(|b| *b += 5.0);
        assert_eq!(predict(&shifted, &[0.7]).unwrap(), before);
    }

    #[test]
    fn gamma_maximin_picks_best_worst_case() {
        let lb = LogitBounds { lower: vec![0.3, 0.5], upper: vec![2.0, 0.6] };
        assert_eq!(gamma_maximin(&lb), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let lower: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut best = 0;
            for j in 1..lower.len() {
                if lower[j] > lower[best] {
                    best = j;
                }
            }
            let lb = LogitBounds { upper: lower.clone(), lower };
            assert_eq!(gamma_maximin(&lb), best);
        }
    }

    #[test]
    fn maximality_one_dimensional() {
        let w = Matrix::from_rows(&[vec![2.0], vec![-2.0]]).unwrap();
        assert_eq!(maximal_labels(&w, &[0.0, 0.0], &[0.4], &[0.6]).unwrap(), vec![0]);
    }

    #[test]
    fn maximality_point_box_and_ties() {
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let b = [0.0; 3];
        assert_eq!(maximal_labels(&w, &b, &[0.2, 0.7], &[0.2, 0.7]).unwrap(), vec![1]);
        // every class scores 0.5 at p = (0.5, 0.5)
        assert_eq!(maximal_labels(&w, &b, &[0.5, 0.5], &[0.5, 0.5]).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn maximality_matches_dense_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let steps = 17;
        for _ in 0..20 {
            let w = Matrix::from_fn(3, 4, |_, _| rng.random_range(-2.0..2.0));
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-0.5..0.5)).collect();
            let (lower, mut upper) = random_box(&mut rng, 4);
            // shrink boxes so dominance actually occurs
            for i in 0..4 {
                upper[i] = lower[i] + 0.3 * (upper[i] - lower[i]);
            }
            let maximal = maximal_labels(&w, &b, &lower, &upper).unwrap();
            // grid over the first three concepts; the fourth takes whichever
            // endpoint minimizes the difference, which is exact for affine maps
            for j in 0..3 {
                let dominated_by_grid = (0..3).filter(|&o| o != j).any(|o| {
                    let mut min_diff = f64::INFINITY;
                    for a in 0..steps {
                        for c in 0..steps {
                            for e in 0..steps {
                                let t = |s: usize| s as f64 / (steps - 1) as f64;
                                let mut p = vec![
                                    lower[0] + t(a) * (upper[0] - lower[0]),
                                    lower[1] + t(c) * (upper[1] - lower[1]),
                                    lower[2] + t(e) * (upper[2] - lower[2]),
                                    0.0,
                                ];
                                let coeff = w.get(o, 3) - w.get(j, 3);
                                p[3] = if coeff > 0.0 { lower[3] } else { upper[3] };
                                let z = point_logits(&w, &b, &p);
                                min_diff = min_diff.min(z[o] - z[j]);
                            }
                        }
                    }
                    min_diff > 0.0
                });
                assert_eq!(!maximal.contains(&j), dominated_by_grid, "class {j}");
            }
        }
    }

    #[test]
    fn e_admissibility_enumerates_heads_and_mean() {
        let w = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let m = tiny_model(w, vec![0.0, 0.0]);
        assert_eq!(e_admissible_labels(&m, &vec![vec![0.8, 0.1]; 3]).unwrap(), vec![0]);
        assert_eq!(e_admissible_labels(&m, &[vec![0.8, 0.1], vec![0.1, 0.9]]).unwrap(), vec![0, 1]);
        assert!(e_admissible_labels(&m, &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = Matrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0));
        let m = tiny_model(w.clone(), vec![0.0; 4]);
        for _ in 0..50 {
            let probs: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random()).collect()).collect();
            let mut expected = std::collections::BTreeSet::new();
            let mut mean = vec![0.0; 3];
            for p in &probs {
                expected.insert(argmax(&point_logits(&w, &[0.0; 4], p)));
                for i in 0..3 {
                    mean[i] += p[i] / 5.0;
                }
            }
            expected.insert(argmax(&point_logits(&w, &[0.0; 4], &mean)));
            let got = e_admissible_labels(&m, &probs).unwrap();
            assert_eq!(got, expected.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn quadrant_rules() {
        assert_eq!(assign_quadrant(0.017, 0.40, 0.005, 0.45), Quadrant::Data);
        assert_eq!(assign_quadrant(0.001, 0.50, 0.005, 0.45), Quadrant::Review);
        assert_eq!(assign_quadrant(0.017, 0.50, 0.005, 0.45), Quadrant::Abstain);
        assert_eq!(assign_quadrant(0.005, 0.45, 0.005, 0.45), Quadrant::Trust);
        for q in Quadrant::ALL {
            assert_eq!(q.to_string().parse::<Quadrant>().unwrap(), q);
        }
    }

    #[test]
    fn reference_examples_land_in_their_quadrants() {
        // (epi, ale) of the four reference reviews; any epi threshold in
        // [0.002, 0.005) and ale threshold in [0.50, 0.89) separates them
        let (te, ta) = (0.003, 0.6);
        assert_eq!(assign_quadrant(0.001, 0.25, te, ta), Quadrant::Trust);
        assert_eq!(assign_quadrant(0.017, 0.50, te, ta), Quadrant::Data);
        assert_eq!(assign_quadrant(0.002, 0.89, te, ta), Quadrant::Review);
        assert_eq!(assign_quadrant(0.005, 0.98, te, ta), Quadrant::Abstain);
    }

    proptest! {
        #[test]
        fn sampled_points_stay_inside_bounds(
            seed in any::<u64>(),
            k in 1usize..8,
            n in 1usize..5,
            t in prop::collection::vec(0.0f64..1.0, 8),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = Matrix::from_fn(n, k, |_, _| rng.random_range(-3.0..3.0));
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (lower, upper) = random_box(&mut rng, k);
            let p: Vec<f64> = (0..k).map(|i| lower[i] + t[i] * (upper[i] - lower[i])).collect();
            let lb = logit_bounds(&w, &b, &lower, &upper).unwrap();
            for (j, z) in point_logits(&w, &b, &p).into_iter().enumerate() {
                prop_assert!(lb.lower[j] - 1e-12 <= z && z <= lb.upper[j] + 1e-12);
                prop_assert!(lb.lower[j] <= lb.upper[j]);
            }
        }
    }
}
