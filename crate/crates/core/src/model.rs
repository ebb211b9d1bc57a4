//! Ensemble parameters and checkpoint persistence.
//!
//! Every head adapts the same frozen base projection `W_p` with its own
//! low-rank update `ΔW_h = (α_h / r_h) B_h A_h`. The aleatoric head `W_σ`
//! reads the raw embedding, and a linear classifier maps mean concept
//! probabilities to class logits.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::{AleMode, TrainConfig};
use crate::error::{CredalError, Result};
use crate::linalg::Matrix;
use crate::schedule::head_dropouts;

pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl HeadConfig {
    pub fn scale(&self) -> f64 {
        self.alpha / self.rank as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoraHead {
    pub config: HeadConfig,
    /// `r × d`
    pub a: Matrix,
    /// `K × r`
    pub b: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub d: usize,
    pub k: usize,
    pub n_classes: usize,
    /// Frozen `K × d` base projection.
    pub base: Matrix,
    pub heads: Vec<LoraHead>,
    /// `K × d` aleatoric head weights.
    pub w_sigma: Matrix,
    /// `n_classes × K`
    pub w_cls: Matrix,
    pub b_cls: Vec<f64>,
    pub ale_mode: AleMode,
    pub config: TrainConfig,
}

impl EnsembleModel {
    /// Seeded initialization: `W_p ~ U(±1/√d)`, `A_h ~ N(0, 1/d)`, `B_h = 0`,
    /// `W_σ = 0`, `W_cls ~ U(±1/√K)`, `b = 0`. Ranks above `d` are clamped to
    /// `d` and `α_h = alpha_per_rank · r_h`.
    pub fn init(d: usize, k: usize, n_classes: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if d == 0 || k == 0 || n_classes < 2 {
            return Err(CredalError::InvalidDimensions(format!(
                "d = {d}, K = {k}, n_classes = {n_classes}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let base_bound = 1.0 / (d as f64).sqrt();
        let base = Matrix::from_fn(k, d, |_, _| rng.random_range(-base_bound..base_bound));

        let a_dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("finite std");
        let dropouts = head_dropouts(cfg)?;
        let heads = cfg
            .head_ranks()
            .into_iter()
            .zip(dropouts)
            .map(|(rank, dropout)| {
                if rank > d {
                    log::debug!("rank {rank} exceeds d = {d}, clamped");
                }
                let rank = rank.min(d);
                let config = HeadConfig {
                    rank,
                    alpha: cfg.alpha_per_rank * rank as f64,
                    dropout,
                };
                LoraHead {
                    config,
                    a: Matrix::from_fn(rank, d, |_, _| a_dist.sample(&mut rng)),
                    b: Matrix::zeros(k, rank),
                }
            })
            .collect();

        let cls_bound = 1.0 / (k as f64).sqrt();
        let w_cls = Matrix::from_fn(n_classes, k, |_, _| rng.random_range(-cls_bound..cls_bound));

        Ok(Self {
            d,
            k,
            n_classes,
            base,
            heads,
            w_sigma: Matrix::zeros(k, d),
            w_cls,
            b_cls: vec![0.0; n_classes],
            ale_mode: cfg.ale_mode,
            config: cfg.clone(),
        })
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn head(&self, index: usize) -> Result<&LoraHead> {
        self.heads.get(index).ok_or(CredalError::HeadOutOfRange {
            index,
            heads: self.heads.len(),
        })
    }

    /// Checks that every matrix agrees with `(d, K, n_classes)` and each head's rank.
    pub fn check_shapes(&self) -> Result<()> {
        let bad = |what: String| Err(CredalError::CorruptCheckpoint(what));
        if self.heads.is_empty() {
            return Err(CredalError::EmptyEnsemble);
        }
        if self.base.shape() != (self.k, self.d) {
            return bad(format!("base projection shape {:?}", self.base.shape()));
        }
        if self.w_sigma.shape() != (self.k, self.d) {
            return bad(format!("aleatoric head shape {:?}", self.w_sigma.shape()));
        }
        if self.w_cls.shape() != (self.n_classes, self.k) || self.b_cls.len() != self.n_classes {
            return bad("classifier shape".into());
        }
        for (i, h) in self.heads.iter().enumerate() {
            let r = h.config.rank;
            if r == 0 || h.a.shape() != (r, self.d) || h.b.shape() != (self.k, r) {
                return bad(format!("head {i} shapes inconsistent with rank {r}"));
            }
            if !(0.0..1.0).contains(&h.config.dropout) {
                return bad(format!("head {i} dropout {}", h.config.dropout));
            }
        }
        Ok(())
    }

    /// Total count of trainable scalars (everything except the base projection).
    pub fn trainable_len(&self) -> usize {
        self.heads
            .iter()
            .map(|h| h.a.as_slice().len() + h.b.as_slice().len())
            .sum::<usize>()
            + self.w_sigma.as_slice().len()
            + self.w_cls.as_slice().len()
            + self.b_cls.len()
    }
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    schema_version: u32,
    train_config: TrainConfig,
    model: EnsembleModel,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

pub fn checkpoint_string(model: &EnsembleModel) -> String {
    let ckpt = Checkpoint {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        train_config: model.config.clone(),
        model: model.clone(),
    };
    serde_json::to_string(&ckpt).expect("checkpoint serializes")
}

pub fn persist_model(model: &EnsembleModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_string(model)).map_err(|e| CredalError::io(path, e))
}

pub fn parse_checkpoint(text: &str) -> Result<EnsembleModel> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| CredalError::CorruptCheckpoint(e.to_string()))?;
    if probe.schema_version != CHECKPOINT_SCHEMA_VERSION {
        return Err(CredalError::VersionMismatch {
            found: probe.schema_version,
            expected: CHECKPOINT_SCHEMA_VERSION,
        });
    }
    let ckpt: Checkpoint =
        serde_json::from_str(text).map_err(|e| CredalError::CorruptCheckpoint(e.to_string()))?;
    let mut model = ckpt.model;
    model.config = ckpt.train_config;
    model.check_shapes()?;
    Ok(model)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EnsembleModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CredalError::io(path, e))?;
    parse_checkpoint(&text)
}
