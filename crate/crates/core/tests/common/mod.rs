#![allow(dead_code)]

use credal_cbm::data::Splits;
use credal_cbm::synth::{generate, SynthConfig};
use credal_cbm::TrainConfig;

pub const BASE_UNKNOWN: [f64; 4] = [0.25, 0.45, 0.63, 0.75];

/// The n=2000, d=32, K=4, seed-42 synthetic set, split 60/20/20.
pub fn reference_splits() -> Splits {
    let cfg = SynthConfig::new(2000, 32, 4, 3, 42, BASE_UNKNOWN.to_vec());
    let (ds, _) = generate(&cfg).expect("valid synthetic config");
    ds.split(0.6, 0.2, 42).expect("valid split")
}

pub fn small_splits(n: usize, seed: u64) -> Splits {
    let cfg = SynthConfig::new(n, 12, 3, 3, seed, vec![0.2, 0.4, 0.6]);
    let (ds, _) = generate(&cfg).expect("valid synthetic config");
    ds.split(0.6, 0.2, seed).expect("valid split")
}

pub fn fast_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 6,
        heads: 3,
        ranks: vec![2, 4, 8],
        ..TrainConfig::desk_scale()
    }
}
