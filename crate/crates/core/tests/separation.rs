mod common;

use std::sync::OnceLock;

use credal_cbm::data::Splits;
use credal_cbm::model::EnsembleModel;
use credal_cbm::train::{infer_dataset, train_model};
use credal_cbm::{AleMode, TrainConfig};
use proptest::prelude::*;

use common::{fast_config, small_splits};

fn fixture() -> &'static (Splits, Vec<EnsembleModel>) {
    static CELL: OnceLock<(Splits, Vec<EnsembleModel>)> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = small_splits(200, 21);
        let models = [AleMode::SupervisedBce, AleMode::Heteroscedastic, AleMode::Entropy]
            .into_iter()
            .map(|mode| {
                let cfg = TrainConfig { ale_mode: mode, ..fast_config() };
                train_model(&s.train, &s.val, &cfg).unwrap().model
            })
            .collect();
        (s, models)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn head_weights_do_not_move_aleatoric_scores(which in 0usize..3, seed in any::<u64>(), scale in 0.01f64..2.0) {
        let (s, models) = fixture();
        let model = &models[which];
        let mut perturbed = model.clone();
        let mut state = seed | 1;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state as f64 / u64::MAX as f64 - 0.5) * scale
        };
        for head in &mut perturbed.heads {
            head.a.as_mut_slice().iter_mut().for_each(|v| *v += next());
            head.b.as_mut_slice().iter_mut().for_each(|v| *v += next());
        }
        let before = infer_dataset(model, &s.test).unwrap();
        let after = infer_dataset(&perturbed, &s.test).unwrap();
        let mut epi_moved = false;
        for (x, y) in before.iter().zip(&after) {
            prop_assert_eq!(&x.report.u_ale, &y.report.u_ale);
            prop_assert_eq!(x.report.sample_ale, y.report.sample_ale);
            epi_moved |= x.report.u_epi != y.report.u_epi;
        }
        prop_assert!(epi_moved);
    }

    #[test]
    fn aleatoric_weights_do_not_move_epistemic_scores(which in 0usize..3, shift in -3.0f64..3.0) {
        prop_assume!(shift.abs() > 1e-3);
        let (s, models) = fixture();
        let model = &models[which];
        let mut perturbed = model.clone();
        perturbed.w_sigma.as_mut_slice().iter_mut().enumerate().for_each(|(i, v)| *v += shift * ((i % 5) as f64 - 2.0));
        let before = infer_dataset(model, &s.test).unwrap();
        let after = infer_dataset(&perturbed, &s.test).unwrap();
        let mut ale_moved = false;
        for (x, y) in before.iter().zip(&after) {
            prop_assert_eq!(&x.report.u_epi, &y.report.u_epi);
            prop_assert_eq!(&x.report.lower, &y.report.lower);
            prop_assert_eq!(&x.report.upper, &y.report.upper);
            prop_assert_eq!(&x.report.mean, &y.report.mean);
            prop_assert_eq!(&x.bounds, &y.bounds);
            prop_assert_eq!(x.class, y.class);
            ale_moved |= x.report.u_ale != y.report.u_ale;
        }
        prop_assert!(ale_moved);
    }
}

#[test]
fn none_mode_reports_width_as_aleatoric_score() {
    let (s, _) = fixture();
    let cfg = TrainConfig { ale_mode: AleMode::None, ..fast_config() };
    let model = train_model(&s.train, &s.val, &cfg).unwrap().model;
    for inf in infer_dataset(&model, &s.test).unwrap() {
        for k in 0..inf.report.k() {
            assert_eq!(inf.report.u_ale[k], inf.report.upper[k] - inf.report.lower[k]);
        }
    }
}
