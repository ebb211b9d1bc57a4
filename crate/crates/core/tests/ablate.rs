mod common;

use credal_cbm::ablate::{run_sweep, sweep_table, SweepAxis, SweepSpec};
use credal_cbm::TrainConfig;

use common::{fast_config, reference_splits, small_splits};

fn values(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn more_heads_raise_epistemic_correlation() {
    let s = reference_splits();
    let spec = SweepSpec::new(TrainConfig::desk_scale(), SweepAxis::Heads, values(&["1", "5"])).unwrap();
    let rows = run_sweep(&spec, &s).unwrap();
    assert_eq!(rows[0].rho_epi, Some(0.0));
    assert_eq!(rows[0].width, Some(0.0));
    assert!(rows[1].rho_epi.unwrap() > rows[0].rho_epi.unwrap(), "{rows:?}");
}

#[test]
fn mixed_ranks_disagree_more_than_uniform_ranks() {
    let s = reference_splits();
    let spec = SweepSpec::new(
        TrainConfig::desk_scale(),
        SweepAxis::Ranks,
        values(&["16/16/16/16/16", "4/8/16/32/64"]),
    )
    .unwrap();
    let rows = run_sweep(&spec, &s).unwrap();
    assert!(rows[1].disagreement.unwrap() > rows[0].disagreement.unwrap(), "{rows:?}");
}

#[test]
fn sweeps_are_deterministic_and_ordered() {
    let s = small_splits(200, 4);
    let spec = SweepSpec::new(fast_config(), SweepAxis::Seed, values(&["1", "2", "3"])).unwrap();
    let a = run_sweep(&spec, &s).unwrap();
    let b = run_sweep(&spec, &s).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), ["1", "2", "3"]);
    assert!(a.iter().all(|r| r.error.is_none()));
    let table = sweep_table(&spec, &a).to_string();
    assert_eq!(table.lines().count(), 2 + 3);
}

#[test]
fn bad_sweep_values_are_rejected_up_front() {
    assert!(SweepSpec::new(fast_config(), SweepAxis::Heads, values(&["3", "zero"])).is_err());
    assert!(SweepSpec::new(fast_config(), SweepAxis::LambdaA, values(&["-1"])).is_err());
}
