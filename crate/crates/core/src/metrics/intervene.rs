use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::decide::predict;
use crate::error::{CredalError, Result};
use crate::model::EnsembleModel;
use crate::train::{infer_dataset, Inference};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Epistemic,
    Aleatoric,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Epistemic, Strategy::Aleatoric, Strategy::Random];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Epistemic => "epi",
            Strategy::Aleatoric => "ale",
            Strategy::Random => "random",
        })
    }
}

impl FromStr for Strategy {
    type Err = CredalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epi" | "epistemic" => Ok(Strategy::Epistemic),
            "ale" | "aleatoric" => Ok(Strategy::Aleatoric),
            "random" => Ok(Strategy::Random),
            other => Err(CredalError::InvalidArgument(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Whether concepts are ranked per example or once for the whole split.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    PerExample,
    /// Rank concepts by their mean score over the split and use the same
    /// order for every example.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionConfig {
    pub strategy: Strategy,
    pub m: usize,
    pub seed: u64,
    pub selection: Selection,
}

impl InterventionConfig {
    pub fn new(strategy: Strategy, m: usize, seed: u64) -> Self {
        Self {
            strategy,
            m,
            seed,
            selection: Selection::PerExample,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionReport {
    pub strategy: Strategy,
    pub m: usize,
    pub selection: Selection,
    /// `min(m, K)`; fewer are replaced when an example has fewer known concepts.
    pub corrected_per_example: usize,
    pub corrected_total: usize,
    pub acc_original: f64,
    pub acc_corrected: f64,
    pub delta_acc: f64,
}

fn order_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // highest first, ties to the lower index
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

pub fn intervene(model: &EnsembleModel, split: &Dataset, cfg: InterventionConfig) -> Result<InterventionReport> {
    let inferences = infer_dataset(model, split)?;
    intervene_inferences(model, split, &inferences, cfg)
}

/// Replaces the top-ranked predicted mean concept values with ground truth and
/// re-predicts. Unknown concepts are never selected.
pub fn intervene_inferences(
    model: &EnsembleModel,
    split: &Dataset,
    inferences: &[Inference],
    cfg: InterventionConfig,
) -> Result<InterventionReport> {
    if split.is_empty() {
        return Err(CredalError::EmptyDataset);
    }
    let k = split.k;
    let cap = cfg.m.min(k);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let score = |inf: &Inference| -> Vec<f64> {
        match cfg.strategy {
            Strategy::Epistemic => inf.report.u_epi.clone(),
            Strategy::Aleatoric => inf.report.u_ale.clone(),
            Strategy::Random => vec![0.0; k],
        }
    };
    let global_order = match cfg.selection {
        Selection::Global if cfg.strategy != Strategy::Random => {
            let mut totals = vec![0.0; k];
            for inf in inferences {
                totals.iter_mut().zip(score(inf)).for_each(|(t, s)| *t += s);
            }
            Some(order_by_score(&totals))
        }
        Selection::Global => {
            let mut order: Vec<usize> = (0..k).collect();
            order.shuffle(&mut rng);
            Some(order)
        }
        Selection::PerExample => None,
    };

    let (mut before, mut after, mut corrected_total) = (0usize, 0usize, 0usize);
    for (inf, e) in inferences.iter().zip(&split.examples) {
        before += usize::from(inf.class == e.label);
        let order = match (&global_order, cfg.strategy) {
            (Some(o), _) => o.clone(),
            (None, Strategy::Random) => {
                let mut o: Vec<usize> = (0..k).collect();
                o.shuffle(&mut rng);
                o
            }
            (None, _) => order_by_score(&score(inf)),
        };
        let mut concepts = inf.report.mean.clone();
        let mut replaced = 0;
        for j in order {
            if replaced == cap {
                break;
            }
            if let Some(truth) = e.concepts[j].target() {
                concepts[j] = truth;
                replaced += 1;
            }
        }
        corrected_total += replaced;
        let class = if replaced == 0 { inf.class } else { predict(model, &concepts)? };
        after += usize::from(class == e.label);
    }
    let n = split.len() as f64;
    let acc_original = before as f64 / n;
    let acc_corrected = after as f64 / n;
    Ok(InterventionReport {
        strategy: cfg.strategy,
        m: cfg.m,
        selection: cfg.selection,
        corrected_per_example: cap,
        corrected_total,
        acc_original,
        acc_corrected,
        delta_acc: acc_corrected - acc_original,
    })
}
