//! Configuration sweeps: one full train and evaluate per value of one axis.

use std::fmt;
use std::str::FromStr;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::config::{AleMode, DropoutSpacing, TrainConfig};
use crate::data::{Dataset, Splits};
use crate::error::{CredalError, Result};
use crate::metrics::table::Table;
use crate::metrics::{evaluate_inferences, mean_interval_width, AleReference};
use crate::train::{infer_dataset, train_model, Inference};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Heads,
    /// Values are `/`-separated rank lists, e.g. `16/16/16/16/16`.
    Ranks,
    DropoutSpacing,
    AleMode,
    LambdaC,
    LambdaA,
    Seed,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::Heads,
        SweepAxis::Ranks,
        SweepAxis::DropoutSpacing,
        SweepAxis::AleMode,
        SweepAxis::LambdaC,
        SweepAxis::LambdaA,
        SweepAxis::Seed,
    ];

    /// Returns `base` with this axis set to `value`.
    pub fn apply(self, base: &TrainConfig, value: &str) -> Result<TrainConfig> {
        let bad = |what: &str| CredalError::InvalidArgument(format!("bad {what} value '{value}'"));
        let mut cfg = base.clone();
        match self {
            SweepAxis::Heads => cfg.heads = value.parse().map_err(|_| bad("heads"))?,
            SweepAxis::Ranks => {
                cfg.ranks = value
                    .split('/')
                    .map(|r| r.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad("ranks"))?;
            }
            SweepAxis::DropoutSpacing => cfg.dropout_spacing = DropoutSpacing::from_str(value)?,
            SweepAxis::AleMode => cfg.ale_mode = AleMode::from_str(value)?,
            SweepAxis::LambdaC => cfg.lambda_c = value.parse().map_err(|_| bad("lambda_c"))?,
            SweepAxis::LambdaA => cfg.lambda_a = value.parse().map_err(|_| bad("lambda_a"))?,
            SweepAxis::Seed => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Heads => "heads",
            SweepAxis::Ranks => "ranks",
            SweepAxis::DropoutSpacing => "dropout_spacing",
            SweepAxis::AleMode => "ale_mode",
            SweepAxis::LambdaC => "lambda_c",
            SweepAxis::LambdaA => "lambda_a",
            SweepAxis::Seed => "seed",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = CredalError;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.to_string() == s || (s == "h" && *a == SweepAxis::Heads))
            .ok_or_else(|| CredalError::InvalidArgument(format!("unknown sweep axis '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    Acc,
    RhoEpi,
    RhoAle,
    Width,
    Disagreement,
}

impl SweepMetric {
    pub const ALL: [SweepMetric; 5] = [
        SweepMetric::Acc,
        SweepMetric::RhoEpi,
        SweepMetric::RhoAle,
        SweepMetric::Width,
        SweepMetric::Disagreement,
    ];

    fn header(self) -> &'static str {
        match self {
            SweepMetric::Acc => "Acc (%)",
            SweepMetric::RhoEpi => "rho_epi",
            SweepMetric::RhoAle => "rho_ale",
            SweepMetric::Width => "width",
            SweepMetric::Disagreement => "disagreement",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: TrainConfig,
    pub axis: SweepAxis,
    pub values: Vec<String>,
    pub metrics: Vec<SweepMetric>,
}

impl SweepSpec {
    /// Checks that every value applies cleanly to `base`.
    pub fn new(base: TrainConfig, axis: SweepAxis, values: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(CredalError::InvalidArgument(format!("sweep over {axis} has no values")));
        }
        for v in &values {
            axis.apply(&base, v)?;
        }
        Ok(Self {
            base,
            axis,
            values,
            metrics: SweepMetric::ALL.to_vec(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: String,
    pub acc: Option<f64>,
    pub rho_epi: Option<f64>,
    pub rho_epi_p: Option<f64>,
    pub rho_ale: Option<f64>,
    pub width: Option<f64>,
    pub disagreement: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Set when this cell failed; the other cells still run.
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(axis: SweepAxis, value: &str, err: &CredalError) -> Self {
        Self {
            axis,
            value: value.to_string(),
            acc: None,
            rho_epi: None,
            rho_epi_p: None,
            rho_ale: None,
            width: None,
            disagreement: None,
            best_epoch: None,
            error: Some(err.to_string()),
        }
    }

    fn metric(&self, m: SweepMetric) -> Option<f64> {
        match m {
            SweepMetric::Acc => self.acc.map(|a| 100.0 * a),
            SweepMetric::RhoEpi => self.rho_epi,
            SweepMetric::RhoAle => self.rho_ale,
            SweepMetric::Width => self.width,
            SweepMetric::Disagreement => self.disagreement,
        }
    }
}

/// Mean over head pairs, concepts and examples of `|p_h − p_h′|`; 0 with one head.
pub fn mean_pairwise_disagreement(inferences: &[Inference]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for inf in inferences {
        let p = &inf.probs;
        for a in 0..p.len() {
            for b in a + 1..p.len() {
                for (x, y) in p[a].iter().zip(&p[b]) {
                    sum += (x - y).abs();
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn run_cell(spec: &SweepSpec, value: &str, splits: &Splits) -> Result<SweepRow> {
    let cfg = spec.axis.apply(&spec.base, value)?;
    let outcome = train_model(&splits.train, &splits.val, &cfg)?;
    let test: &Dataset = &splits.test;
    let inferences = infer_dataset(&outcome.model, test)?;
    let report = evaluate_inferences(&outcome.model, test, &inferences, AleReference::UnknownRate)?;
    Ok(SweepRow {
        axis: spec.axis,
        value: value.to_string(),
        acc: Some(report.acc),
        rho_epi: Some(report.rho_epi.rho),
        rho_epi_p: Some(report.rho_epi.p),
        rho_ale: Some(report.rho_ale_macro),
        width: Some(mean_interval_width(&inferences)),
        disagreement: Some(mean_pairwise_disagreement(&inferences)),
        best_epoch: Some(outcome.best_epoch),
        error: None,
    })
}

/// Trains and evaluates on the test split once per value. Cells are
/// independent and run on separate threads; each is deterministic, so the
/// rows do not depend on scheduling.
pub fn run_sweep(spec: &SweepSpec, splits: &Splits) -> Result<Vec<SweepRow>> {
    if spec.values.is_empty() {
        return Err(CredalError::InvalidArgument(format!("sweep over {} has no values", spec.axis)));
    }
    let rows = thread::scope(|s| {
        let handles: Vec<_> = spec
            .values
            .iter()
            .map(|v| s.spawn(move || run_cell(spec, v, splits)))
            .collect();
        handles
            .into_iter()
            .zip(&spec.values)
            .map(|(h, v)| {
                let result = h.join().unwrap_or_else(|_| {
                    Err(CredalError::InvalidArgument(format!("sweep cell '{v}' panicked")))
                });
                result.unwrap_or_else(|e| {
                    log::error!("sweep cell {}={v} failed: {e}", spec.axis);
                    SweepRow::failed(spec.axis, v, &e)
                })
            })
            .collect()
    });
    Ok(rows)
}

pub fn sweep_table(spec: &SweepSpec, rows: &[SweepRow]) -> Table {
    let mut headers = vec![spec.axis.to_string()];
    headers.extend(spec.metrics.iter().map(|m| m.header().to_string()));
    let mut t = Table::new(headers);
    for row in rows {
        let mut cells = vec![row.value.clone()];
        for &m in &spec.metrics {
            cells.push(match (row.metric(m), &row.error) {
                (Some(v), _) if m == SweepMetric::Acc => format!("{v:.1}"),
                (Some(v), _) => format!("{v:.3}"),
                (None, Some(_)) => "error".into(),
                (None, None) => "-".into(),
            });
        }
        t.push(cells);
    }
    t
}
