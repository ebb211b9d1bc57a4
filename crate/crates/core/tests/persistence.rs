mod common;

use credal_cbm::data::{load_dataset, save_dataset};
use credal_cbm::model::{checkpoint_string, load_model, persist_model};
use credal_cbm::train::{infer_dataset, train_model};
use credal_cbm::{AleMode, TrainConfig};

use common::{fast_config, small_splits};

#[test]
fn dataset_round_trips_through_jsonl() {
    let s = small_splits(120, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.jsonl");
    save_dataset(&s.train, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.examples, s.train.examples);
    assert_eq!((back.d, back.k, back.n_classes), (s.train.d, s.train.k, s.train.n_classes));
    assert_eq!(back.concept_names, s.train.concept_names);
}

#[test]
fn checkpoint_round_trip_preserves_inference() {
    let s = small_splits(200, 2);
    let dir = tempfile::tempdir().unwrap();
    for mode in AleMode::ALL {
        let cfg = TrainConfig { ale_mode: mode, ..fast_config() };
        let model = train_model(&s.train, &s.val, &cfg).unwrap().model;
        let path = dir.path().join(format!("{mode}.ckpt"));
        persist_model(&model, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(checkpoint_string(&back), checkpoint_string(&model));
        let a = infer_dataset(&model, &s.test).unwrap();
        let b = infer_dataset(&back, &s.test).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.class, y.class);
            assert_eq!(x.report, y.report);
            assert_eq!(x.bounds, y.bounds);
        }
    }
}

#[test]
fn corrupt_files_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("bad.ckpt");
    std::fs::write(&ckpt, "{\"not\": \"a model\"}").unwrap();
    assert!(load_model(&ckpt).is_err());
    assert!(load_model(dir.path().join("missing.ckpt")).is_err());

    let data = dir.path().join("bad.jsonl");
    std::fs::write(&data, "{\"id\": \"a\", \"embedding\": [1.0], \"label\": 0, \"concepts\": [2], \"unknown_rate\": [0.0]}\n").unwrap();
    assert!(load_dataset(&data).is_err());
}
