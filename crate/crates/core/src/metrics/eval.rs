use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decide::class_logits;
use crate::error::{CredalError, Result};
use crate::linalg::softmax;
use crate::model::EnsembleModel;
use crate::train::{infer_dataset, Inference};

use super::stats::{ece, spearman, Correlation};

pub const ECE_BINS: usize = 10;

/// What each concept's aleatoric score is correlated against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleReference {
    /// Annotator unknown rate.
    #[default]
    UnknownRate,
    /// Prediction error indicator, for data without annotator disagreement.
    ErrorIndicator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptCorrelation {
    pub concept: String,
    /// `None` when the reference column is constant.
    pub correlation: Option<Correlation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub acc: f64,
    pub rho_epi: Correlation,
    pub rho_ale: Vec<ConceptCorrelation>,
    /// Mean of the per-concept ρ over concepts with a nonconstant reference.
    pub rho_ale_macro: f64,
    /// Largest p-value among the concepts entering the macro average.
    pub rho_ale_macro_p: f64,
    pub ale_reference: AleReference,
    pub ece: f64,
    pub mean_interval_width: f64,
}

pub fn mean_interval_width(inferences: &[Inference]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for inf in inferences {
        for (u, l) in inf.report.upper.iter().zip(&inf.report.lower) {
            sum += u - l;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn evaluate(model: &EnsembleModel, split: &Dataset) -> Result<EvalReport> {
    evaluate_with(model, split, AleReference::UnknownRate)
}

pub fn evaluate_with(model: &EnsembleModel, split: &Dataset, reference: AleReference) -> Result<EvalReport> {
    let inferences = infer_dataset(model, split)?;
    evaluate_inferences(model, split, &inferences, reference)
}

/// Accuracy from the mean prediction, `ρ_epi` between sample-level epistemic
/// uncertainty and the error indicator, per-concept `ρ_ale`, and ECE of the
/// mean-prediction confidence.
pub fn evaluate_inferences(
    model: &EnsembleModel,
    split: &Dataset,
    inferences: &[Inference],
    reference: AleReference,
) -> Result<EvalReport> {
    if split.is_empty() {
        return Err(CredalError::EmptyDataset);
    }
    let n = split.len();
    let errors: Vec<f64> = inferences
        .iter()
        .zip(&split.examples)
        .map(|(inf, e)| f64::from(u8::from(inf.class != e.label)))
        .collect();
    let acc = 1.0 - errors.iter().sum::<f64>() / n as f64;

    let sample_epi: Vec<f64> = inferences.iter().map(|i| i.report.sample_epi).collect();
    let rho_epi = correlate(&sample_epi, &errors)?;

    let mut rho_ale = Vec::with_capacity(split.k);
    let mut used = Vec::new();
    for k in 0..split.k {
        let ale: Vec<f64> = inferences.iter().map(|i| i.report.u_ale[k]).collect();
        let target: Vec<f64> = match reference {
            AleReference::UnknownRate => split.examples.iter().map(|e| e.unknown_rate[k]).collect(),
            AleReference::ErrorIndicator => errors.clone(),
        };
        let constant = target.iter().all(|&t| t == target[0]);
        let correlation = if constant { None } else { Some(correlate(&ale, &target)?) };
        if let Some(c) = correlation {
            used.push(c);
        }
        rho_ale.push(ConceptCorrelation {
            concept: split.concept_names[k].clone(),
            correlation,
        });
    }
    let (rho_ale_macro, rho_ale_macro_p) = if used.is_empty() {
        (0.0, 1.0)
    } else {
        (
            used.iter().map(|c| c.rho).sum::<f64>() / used.len() as f64,
            used.iter().map(|c| c.p).fold(0.0, f64::max),
        )
    };

    let mut confidences = Vec::with_capacity(n);
    for inf in inferences {
        let q = softmax(&class_logits(model, &inf.report.mean)?);
        confidences.push(q[inf.class]);
    }
    let correct: Vec<bool> = errors.iter().map(|&e| e == 0.0).collect();
    let ece = ece(&confidences, &correct, ECE_BINS)?;

    Ok(EvalReport {
        n,
        acc,
        rho_epi,
        rho_ale,
        rho_ale_macro,
        rho_ale_macro_p,
        ale_reference: reference,
        ece,
        mean_interval_width: mean_interval_width(inferences),
    })
}

/// Spearman that tolerates fewer than three points by reporting no correlation.
fn correlate(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() < 3 {
        return Ok(Correlation::NONE);
    }
    spearman(a, b)
}
