//! Credal intervals from head disagreement, and the epistemic/aleatoric split.
//!
//! For each concept the interval is `[min_h p_h, max_h p_h]`. Epistemic
//! uncertainty is the population variance of the head probabilities (divided
//! by `H`, so it is defined and zero for a single head). Aleatoric uncertainty
//! is whatever the aleatoric head reports; it never depends on the concept
//! heads, and epistemic never depends on the aleatoric head.

use serde::{Deserialize, Serialize};

use crate::error::{CredalError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CredalReport {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub mean: Vec<f64>,
    pub u_epi: Vec<f64>,
    pub u_ale: Vec<f64>,
    pub sample_epi: f64,
    pub sample_ale: f64,
}

impl CredalReport {
    pub fn k(&self) -> usize {
        self.mean.len()
    }
}

pub fn aggregate(probs: &[Vec<f64>], ale: &[f64]) -> Result<CredalReport> {
    let first = probs.first().ok_or(CredalError::EmptyEnsemble)?;
    let k = first.len();
    if let Some(bad) = probs.iter().find(|row| row.len() != k) {
        return Err(CredalError::DimensionMismatch {
            context: "head probabilities",
            expected: k,
            got: bad.len(),
        });
    }
    if ale.len() != k {
        return Err(CredalError::DimensionMismatch {
            context: "aleatoric output",
            expected: k,
            got: ale.len(),
        });
    }
    let h = probs.len() as f64;
    let mut lower = vec![f64::INFINITY; k];
    let mut upper = vec![f64::NEG_INFINITY; k];
    let mut mean = vec![0.0; k];
    for row in probs {
        for j in 0..k {
            lower[j] = lower[j].min(row[j]);
            upper[j] = upper[j].max(row[j]);
            mean[j] += row[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= h);
    // Rounding can push the mean a hair outside [min, max] when all heads agree.
    for j in 0..k {
        mean[j] = mean[j].clamp(lower[j], upper[j]);
    }
    let mut u_epi = vec![0.0; k];
    for row in probs {
        for j in 0..k {
            let dev = row[j] - mean[j];
            u_epi[j] += dev * dev;
        }
    }
    u_epi.iter_mut().for_each(|v| *v /= h);

    let sample_epi = u_epi.iter().sum::<f64>() / k as f64;
    let sample_ale = ale.iter().sum::<f64>() / k as f64;
    Ok(CredalReport {
        lower,
        upper,
        mean,
        u_epi,
        u_ale: ale.to_vec(),
        sample_epi,
        sample_ale,
    })
}

/// Imprecision `upper − lower` per concept.
pub fn interval_width(report: &CredalReport) -> Vec<f64> {
    report
        .upper
        .iter()
        .zip(&report.lower)
        .map(|(u, l)| u - l)
        .collect()
}
