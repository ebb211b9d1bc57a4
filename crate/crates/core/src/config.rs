use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CredalError, Result};

/// How the aleatoric head is trained and which activation it uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleMode {
    /// Sigmoid output, BCE against annotator disagreement.
    SupervisedBce,
    /// Softplus output, Gaussian NLL on head residuals.
    Heteroscedastic,
    /// Sigmoid output, BCE against the normalized uncertainty of the mean prediction.
    Entropy,
    /// No aleatoric head; interval width stands in for aleatoric uncertainty.
    None,
}

impl AleMode {
    pub const ALL: [AleMode; 4] = [
        AleMode::SupervisedBce,
        AleMode::Heteroscedastic,
        AleMode::Entropy,
        AleMode::None,
    ];
}

impl fmt::Display for AleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AleMode::SupervisedBce => "bce",
            AleMode::Heteroscedastic => "hetero",
            AleMode::Entropy => "entropy",
            AleMode::None => "none",
        })
    }
}

impl FromStr for AleMode {
    type Err = CredalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" | "supervised_bce" => Ok(AleMode::SupervisedBce),
            "hetero" | "heteroscedastic" => Ok(AleMode::Heteroscedastic),
            "entropy" => Ok(AleMode::Entropy),
            "none" => Ok(AleMode::None),
            other => Err(CredalError::InvalidArgument(format!("unknown ale mode '{other}'"))),
        }
    }
}

/// Target used by the supervised aleatoric loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AleTarget {
    /// `1[unknown_rate > 0.5]`
    Binary,
    /// `unknown_rate` as a soft BCE target.
    Soft,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropoutSpacing {
    /// Geometric in keep-probability space.
    Geometric,
    Linear,
    /// Every head uses `dropout_min`.
    Uniform,
}

impl FromStr for DropoutSpacing {
    type Err = CredalError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(DropoutSpacing::Geometric),
            "linear" => Ok(DropoutSpacing::Linear),
            "uniform" => Ok(DropoutSpacing::Uniform),
            other => Err(CredalError::InvalidArgument(format!(
                "unknown dropout spacing '{other}'"
            ))),
        }
    }
}

pub const DEFAULT_RANKS: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub warmup_steps: usize,
    pub grad_clip: f64,
    pub lambda_c: f64,
    pub lambda_a: f64,
    pub patience: usize,
    pub seed: u64,
    pub heads: usize,
    /// Cycled when shorter than `heads`.
    pub ranks: Vec<usize>,
    pub alpha_per_rank: f64,
    pub dropout_min: f64,
    pub dropout_max: f64,
    pub dropout_spacing: DropoutSpacing,
    pub ale_mode: AleMode,
    pub ale_target: AleTarget,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            weight_decay: 0.01,
            batch_size: 16,
            max_epochs: 40,
            warmup_steps: 500,
            grad_clip: 1.0,
            lambda_c: 1.0,
            lambda_a: 0.5,
            patience: 5,
            seed: 42,
            heads: 5,
            ranks: DEFAULT_RANKS.to_vec(),
            alpha_per_rank: 2.0,
            dropout_min: 0.05,
            dropout_max: 0.30,
            dropout_spacing: DropoutSpacing::Geometric,
            ale_mode: AleMode::SupervisedBce,
            ale_target: AleTarget::Binary,
        }
    }
}

impl TrainConfig {
    /// Settings for a few-thousand-example synthetic run on a laptop CPU.
    ///
    /// The default schedule (lr 1e-4, 500 warmup steps) assumes tens of
    /// thousands of steps; at a couple of thousand examples it barely moves
    /// the classifier, so this preset raises the learning rate and shortens
    /// warmup. Everything else keeps the default values.
    pub fn desk_scale() -> Self {
        Self {
            lr: 1e-2,
            warmup_steps: 50,
            ..Self::default()
        }
    }

    /// Ranks per head, cycling through `ranks` when it is shorter than `heads`.
    pub fn head_ranks(&self) -> Vec<usize> {
        (0..self.heads)
            .map(|h| self.ranks[h % self.ranks.len()])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CredalError::InvalidArgument(m.to_string()));
        if self.heads == 0 {
            return bad("heads must be at least 1");
        }
        if self.ranks.is_empty() || self.ranks.contains(&0) {
            return bad("ranks must be non-empty and positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.weight_decay < 0.0 || self.grad_clip <= 0.0 {
            return bad("weight_decay must be >= 0 and grad_clip > 0");
        }
        if self.lambda_c < 0.0 || self.lambda_a < 0.0 {
            return bad("loss weights must be non-negative");
        }
        if self.alpha_per_rank <= 0.0 {
            return bad("alpha_per_rank must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_min) || !(0.0..1.0).contains(&self.dropout_max) {
            return bad("dropout rates must lie in [0, 1)");
        }
        if self.dropout_min > self.dropout_max {
            return bad("dropout_min must not exceed dropout_max");
        }
        Ok(())
    }
}
