//! Per-head dropout rates and the learning-rate schedule.

use std::f64::consts::PI;

use crate::config::{DropoutSpacing, TrainConfig};
use crate::error::{CredalError, Result};

/// Dropout rates spaced geometrically in keep-probability space:
///
/// ```text
/// d_h = 1 − exp( log(1 − d_max) + h/(H−1) · [log(1 − d_min) − log(1 − d_max)] ),  h = 0..H−1
/// ```
///
/// `h = 0` gives `d_max` and `h = H−1` gives `d_min`; the result is returned
/// in ascending order with both endpoints exact.
pub fn dropout_schedule(heads: usize, d_min: f64, d_max: f64) -> Result<Vec<f64>> {
    if heads < 2 {
        return Err(CredalError::InvalidArgument(format!(
            "dropout schedule needs at least 2 heads, got {heads}"
        )));
    }
    if !(0.0 <= d_min && d_min < d_max && d_max < 1.0) {
        return Err(CredalError::InvalidArgument(format!(
            "invalid dropout range [{d_min}, {d_max}]"
        )));
    }
    let lo = (1.0 - d_max).ln();
    let hi = (1.0 - d_min).ln();
    let last = (heads - 1) as f64;
    let mut rates: Vec<f64> = (0..heads)
        .map(|h| {
            if h == 0 {
                d_max
            } else if h == heads - 1 {
                d_min
            } else {
                1.0 - (lo + (h as f64 / last) * (hi - lo)).exp()
            }
        })
        .collect();
    rates.reverse();
    Ok(rates)
}

fn linear_schedule(heads: usize, d_min: f64, d_max: f64) -> Vec<f64> {
    let last = (heads - 1) as f64;
    (0..heads)
        .map(|h| d_min + (d_max - d_min) * h as f64 / last)
        .collect()
}

/// Dropout rate for every head of a model built from `cfg`.
pub fn head_dropouts(cfg: &TrainConfig) -> Result<Vec<f64>> {
    let h = cfg.heads;
    if h == 1 || cfg.dropout_spacing == DropoutSpacing::Uniform || cfg.dropout_min == cfg.dropout_max
    {
        return Ok(vec![cfg.dropout_min; h]);
    }
    match cfg.dropout_spacing {
        DropoutSpacing::Geometric => dropout_schedule(h, cfg.dropout_min, cfg.dropout_max),
        DropoutSpacing::Linear => Ok(linear_schedule(h, cfg.dropout_min, cfg.dropout_max)),
        DropoutSpacing::Uniform => unreachable!(),
    }
}

/// Linear warmup from 0 to `peak_lr` over `warmup_steps`, then cosine decay to 0
/// at `total_steps`.
pub fn lr_at_step(step: usize, warmup_steps: usize, total_steps: usize, peak_lr: f64) -> Result<f64> {
    if step > total_steps {
        return Err(CredalError::InvalidArgument(format!(
            "step {step} beyond total_steps {total_steps}"
        )));
    }
    if warmup_steps >= total_steps {
        return Err(CredalError::InvalidArgument(format!(
            "warmup_steps {warmup_steps} must be below total_steps {total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok(peak_lr * step as f64 / warmup_steps as f64);
    }
    let progress = (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
    Ok(peak_lr * 0.5 * (1.0 + (PI * progress).cos()))
}
