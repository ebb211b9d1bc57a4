//! Training configuration: preset, then TOML file, then flags.

use std::path::Path;

use anyhow::{bail, Context, Result};
use credal_cbm::TrainConfig;

use crate::args::{ConfigArgs, Preset};

fn preset(p: Preset) -> TrainConfig {
    match p {
        Preset::Full => TrainConfig::default(),
        Preset::Desk => TrainConfig::desk_scale(),
    }
}

/// Overlays the keys of a TOML document on `base`. Keys must name
/// `TrainConfig` fields.
pub fn overlay_toml(base: &TrainConfig, text: &str) -> Result<TrainConfig> {
    let file: toml::Table = text.parse().context("config is not valid TOML")?;
    let mut merged = toml::Table::try_from(base).expect("config serializes to TOML");
    for (key, value) in file {
        if !merged.contains_key(&key) {
            bail!("unknown config key '{key}'");
        }
        merged.insert(key, value);
    }
    let cfg: TrainConfig = toml::Value::Table(merged).try_into().context("bad config value")?;
    Ok(cfg)
}

fn read_file(path: &Path, base: &TrainConfig) -> Result<TrainConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    overlay_toml(base, &text).with_context(|| format!("in {}", path.display()))
}

pub fn resolve(args: &ConfigArgs) -> Result<TrainConfig> {
    let mut cfg = preset(args.preset);
    if let Some(path) = &args.config {
        cfg = read_file(path, &cfg)?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(h) = args.heads {
        cfg.heads = h as usize;
    }
    if let Some(r) = &args.ranks {
        cfg.ranks = r.clone();
    }
    if let Some(m) = args.ale_mode {
        cfg.ale_mode = m.into();
    }
    if let Some(e) = args.epochs {
        cfg.max_epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.lr = lr;
    }
    cfg.validate()?;
    Ok(cfg)
}
