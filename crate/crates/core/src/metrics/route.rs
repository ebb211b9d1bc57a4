use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decide::{assign_quadrant, Quadrant};
use crate::error::{CredalError, Result};
use crate::model::EnsembleModel;
use crate::train::{infer_dataset, Inference};

use super::stats::{binarize_at_median, cohen_kappa, krippendorff_alpha, median, Agreement};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantRow {
    pub quadrant: Quadrant,
    pub count: usize,
    /// `None` for an empty quadrant.
    pub accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadrantReport {
    pub epi_threshold: f64,
    pub ale_threshold: f64,
    pub n: usize,
    /// TRUST, DATA, REVIEW, ABSTAIN in that order.
    pub rows: Vec<QuadrantRow>,
}

impl QuadrantReport {
    pub fn row(&self, q: Quadrant) -> &QuadrantRow {
        self.rows.iter().find(|r| r.quadrant == q).expect("all quadrants present")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutedExample {
    pub id: String,
    pub quadrant: Quadrant,
    pub predicted: usize,
    pub label: usize,
    pub sample_epi: f64,
    pub sample_ale: f64,
}

/// Quadrant per example with thresholds at the split medians of the
/// sample-level uncertainties.
pub fn route_inferences(split: &Dataset, inferences: &[Inference]) -> Result<(Vec<RoutedExample>, QuadrantReport)> {
    if split.is_empty() {
        return Err(CredalError::EmptyDataset);
    }
    let epi: Vec<f64> = inferences.iter().map(|i| i.report.sample_epi).collect();
    let ale: Vec<f64> = inferences.iter().map(|i| i.report.sample_ale).collect();
    let te = median(&epi).expect("non-empty");
    let ta = median(&ale).expect("non-empty");

    let mut counts = [0usize; 4];
    let mut hits = [0usize; 4];
    let mut routed = Vec::with_capacity(split.len());
    for (inf, e) in inferences.iter().zip(&split.examples) {
        let q = assign_quadrant(inf.report.sample_epi, inf.report.sample_ale, te, ta);
        let slot = Quadrant::ALL.iter().position(|&x| x == q).expect("known quadrant");
        counts[slot] += 1;
        hits[slot] += usize::from(inf.class == e.label);
        routed.push(RoutedExample {
            id: e.id.clone(),
            quadrant: q,
            predicted: inf.class,
            label: e.label,
            sample_epi: inf.report.sample_epi,
            sample_ale: inf.report.sample_ale,
        });
    }
    let rows = Quadrant::ALL
        .iter()
        .enumerate()
        .map(|(i, &quadrant)| QuadrantRow {
            quadrant,
            count: counts[i],
            accuracy: (counts[i] > 0).then(|| hits[i] as f64 / counts[i] as f64),
        })
        .collect();
    Ok((
        routed,
        QuadrantReport {
            epi_threshold: te,
            ale_threshold: ta,
            n: split.len(),
            rows,
        },
    ))
}

pub fn route(model: &EnsembleModel, split: &Dataset) -> Result<(Vec<RoutedExample>, QuadrantReport)> {
    route_inferences(split, &infer_dataset(model, split)?)
}

pub fn quadrant_report(model: &EnsembleModel, split: &Dataset) -> Result<QuadrantReport> {
    route(model, split).map(|(_, r)| r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptAgreement {
    pub concept: String,
    pub kappa: Agreement,
    pub alpha: Agreement,
    /// Either binarized column is constant; excluded from the macro average.
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IaaReport {
    pub per_concept: Vec<ConceptAgreement>,
    pub macro_kappa: f64,
    pub macro_alpha: f64,
}

/// Agreement between the model's aleatoric scores and annotator unknown rates,
/// each binarized at its own per-concept median.
pub fn proxy_iaa_inferences(split: &Dataset, inferences: &[Inference]) -> Result<IaaReport> {
    if split.len() < 2 {
        return Err(CredalError::InvalidArgument("proxy agreement needs at least 2 examples".into()));
    }
    let mut per_concept = Vec::with_capacity(split.k);
    for k in 0..split.k {
        let model_col: Vec<f64> = inferences.iter().map(|i| i.report.u_ale[k]).collect();
        let human_col: Vec<f64> = split.examples.iter().map(|e| e.unknown_rate[k]).collect();
        let a = binarize_at_median(&model_col);
        let b = binarize_at_median(&human_col);
        let constant = |v: &[bool]| v.iter().all(|&x| x == v[0]);
        let flagged = constant(&a) || constant(&b);
        if flagged {
            log::warn!("concept {}: constant binarized column, excluded from macro agreement", split.concept_names[k]);
        }
        per_concept.push(ConceptAgreement {
            concept: split.concept_names[k].clone(),
            kappa: cohen_kappa(&a, &b)?,
            alpha: krippendorff_alpha(&a, &b)?,
            flagged,
        });
    }
    let used: Vec<&ConceptAgreement> = per_concept.iter().filter(|c| !c.flagged).collect();
    let mean = |f: fn(&ConceptAgreement) -> f64| {
        if used.is_empty() {
            0.0
        } else {
            used.iter().map(|c| f(c)).sum::<f64>() / used.len() as f64
        }
    };
    let macro_kappa = mean(|c| c.kappa.value);
    let macro_alpha = mean(|c| c.alpha.value);
    Ok(IaaReport {
        per_concept,
        macro_kappa,
        macro_alpha,
    })
}

pub fn proxy_iaa(model: &EnsembleModel, split: &Dataset) -> Result<IaaReport> {
    proxy_iaa_inferences(split, &infer_dataset(model, split)?)
}
