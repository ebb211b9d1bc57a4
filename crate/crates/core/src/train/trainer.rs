use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{AleMode, TrainConfig};
use crate::data::{Dataset, Example};
use crate::error::{CredalError, Result};
use crate::model::EnsembleModel;
use crate::schedule::lr_at_step;
use crate::synth::stream;

use super::infer::accuracy;
use super::loss::{draw_masks, loss_and_gradients, LossBreakdown};
use super::optim::{adamw_model_step, AdamWParams, OptimizerState};

const SHUFFLE_STREAM: u64 = 11;
const DROPOUT_STREAM: u64 = 12;

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-averaged training losses.
    pub task: f64,
    pub concept: f64,
    pub ale: f64,
    pub total: f64,
    pub val_acc: f64,
    /// Learning rate at the last step of the epoch.
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Checkpoint with the best validation accuracy.
    pub model: EnsembleModel,
    pub log: Vec<EpochRecord>,
    /// 0 when no epoch completed.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Epoch in which a non-finite loss or gradient appeared.
    pub diverged: Option<usize>,
}

fn check_compatible(train: &Dataset, val: &Dataset) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(CredalError::EmptyDataset);
    }
    if (train.d, train.k, train.n_classes) != (val.d, val.k, val.n_classes) {
        return Err(CredalError::InvalidDimensions(format!(
            "train (d={}, K={}, classes={}) and validation (d={}, K={}, classes={}) differ",
            train.d, train.k, train.n_classes, val.d, val.k, val.n_classes
        )));
    }
    Ok(())
}

/// Minibatch training with warmup/cosine AdamW and early stopping on
/// validation accuracy.
///
/// Shuffling and dropout draw from separate streams derived from
/// `cfg.seed`, so a run is fully determined by `(train, val, cfg)`. Training
/// stops once `patience` consecutive epochs fail to beat the best validation
/// accuracy. A non-finite loss stops training and returns the best checkpoint
/// reached so far with `diverged` set.
pub fn train_model(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(train, val)?;
    if cfg.ale_mode == AleMode::SupervisedBce && cfg.lambda_a > 0.0 && !train.has_disagreement() {
        return Err(CredalError::InvalidArgument(
            "supervised aleatoric training needs annotator disagreement, but every unknown_rate is 0; \
             use ale mode entropy, hetero or none"
                .into(),
        ));
    }

    let mut model = EnsembleModel::init(train.d, train.k, train.n_classes, cfg)?;
    let mut opt = OptimizerState::for_model(&model);
    let mut shuffle_rng = stream(cfg.seed, SHUFFLE_STREAM);
    let mut dropout_rng = stream(cfg.seed, DROPOUT_STREAM);

    let n = train.len();
    let batches_per_epoch = n.div_ceil(cfg.batch_size);
    let total_steps = (cfg.max_epochs * batches_per_epoch).max(1);
    let warmup = cfg.warmup_steps.min(total_steps - 1);

    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut log = Vec::new();
    let mut step = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut stopped_early = false;
    let mut diverged = None;

    'epochs: for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = LossBreakdown::default();
        let mut lr = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            lr = lr_at_step(step, warmup, total_steps, cfg.lr)?;
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train.examples[i]).collect();
            let masks = draw_masks(&model, batch.len(), &mut dropout_rng);
            let (loss, grads) = loss_and_gradients(&model, &batch, Some(&masks), None)?;
            if !loss.total.is_finite() {
                log::error!("non-finite loss at epoch {epoch}, step {step}");
                diverged = Some(epoch);
                break 'epochs;
            }
            let hp = AdamWParams {
                lr,
                weight_decay: cfg.weight_decay,
                clip: cfg.grad_clip,
            };
            match adamw_model_step(&mut model, &grads, &mut opt, hp) {
                Ok(_) => {}
                Err(CredalError::NonFiniteGradient(name)) => {
                    log::error!("non-finite gradient in {name} at epoch {epoch}");
                    diverged = Some(epoch);
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            let w = batch.len() as f64 / n as f64;
            sums.task += w * loss.task;
            sums.concept += w * loss.concept;
            sums.ale += w * loss.ale;
            sums.total += w * loss.total;
        }

        let val_acc = accuracy(&model, val)?;
        log::info!(
            "epoch {epoch}: loss {:.5} (task {:.5}, concept {:.5}, ale {:.5}), val acc {:.4}, lr {:.3e}",
            sums.total,
            sums.task,
            sums.concept,
            sums.ale,
            val_acc,
            lr
        );
        log.push(EpochRecord {
            epoch,
            task: sums.task,
            concept: sums.concept,
            ale: sums.ale,
            total: sums.total,
            val_acc,
            lr,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best = model.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
                stopped_early = true;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        model: best,
        log,
        best_epoch,
        stopped_early,
        diverged,
    })
}
