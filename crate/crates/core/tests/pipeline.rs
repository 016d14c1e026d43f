use std::collections::BTreeSet;

use painpipe::dataset::{generate_synthetic, ingest, make_fold_plan, DatasetIndex, Fold, Layout, SyntheticConfig};
use painpipe::evaluation::{compute_metrics, run_cross_validation};
use painpipe::models::{ModelName, ModelSpec};
use painpipe::preprocess::{FrameCache, PreprocessConfig, Preprocessor};
use painpipe::training::{predict_frames, train_fold, Checkpoint, TrainingConfig};

fn dataset(subjects: usize, frames: usize, mix: Vec<f64>) -> (tempfile::TempDir, DatasetIndex, FrameCache) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        n_subjects: subjects,
        frames_per_subject: frames,
        class_mix: mix,
        seed: 21,
        ..SyntheticConfig::default()
    };
    generate_synthetic(&cfg, dir.path()).unwrap();
    let (index, _) = ingest(dir.path(), Layout::Synthetic, cfg.n_classes()).unwrap();
    let pre = Preprocessor::new(PreprocessConfig {
        target_size: cfg.image_size,
        ..PreprocessConfig::default()
    })
    .unwrap();
    let frames = FrameCache::build(&pre, index.records()).unwrap();
    (dir, index, frames)
}

fn set(ids: &[&str]) -> BTreeSet<String> {
    ids.iter().map(|s| s.to_string()).collect()
}

fn spec() -> ModelSpec {
    ModelSpec::new(ModelName::ReducedTestNet, 3, 48).with_width(0.25)
}

#[test]
fn separable_set_trains_above_eighty_percent_and_restores() {
    let (_dir, index, frames) = dataset(4, 50, vec![0.4, 0.3, 0.3]);
    assert_eq!(index.len(), 200);
    let fold = Fold {
        train: set(&["S01", "S02"]),
        val: set(&["S03"]),
        test: set(&["S04"]),
    };
    let config = TrainingConfig {
        max_epochs: 30,
        early_stop_patience: 30,
        batch_size: 16,
        seed: 4,
        ..TrainingConfig::default()
    };
    let mut epochs = 0;
    let ckpt = train_fold(&index, &frames, 0, &fold, &spec(), &config, &mut |_| epochs += 1).unwrap();
    assert!(epochs <= 30);
    let best = ckpt.best_record().unwrap().clone();
    assert!(best.val_accuracy > 80.0, "best validation accuracy {}", best.val_accuracy);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fold_0.json");
    ckpt.save(&path).unwrap();
    let restored = Checkpoint::load(&path).unwrap();
    assert_eq!(restored.parameters, ckpt.parameters);
    let net = restored.network().unwrap();
    let val = index.subset(&fold.val).unwrap();
    let pred = predict_frames(&net, &frames, val.records()).unwrap();
    let truth: Vec<usize> = val.records().iter().map(|r| r.class()).collect();
    let m = compute_metrics(&pred, &truth, None).unwrap();
    assert_eq!(m.mae, best.val_mae);
    assert_eq!(m.accuracy, best.val_accuracy);
}

#[test]
fn five_subject_cross_validation_tests_everyone_once() {
    let (_dir, index, frames) = dataset(5, 24, vec![0.5, 0.3, 0.2]);
    let plan = make_fold_plan(index.subjects(), 5, 3, 1, 1, 9).unwrap();
    let config = TrainingConfig {
        max_epochs: 2,
        early_stop_patience: 2,
        batch_size: 16,
        seed: 9,
        ..TrainingConfig::default()
    };
    let report = run_cross_validation(&index, &frames, &plan, &spec(), &config).unwrap();
    assert_eq!(report.per_fold.len(), 5);
    let tested: BTreeSet<String> = report.per_fold.iter().flat_map(|f| f.test_subjects.clone()).collect();
    assert_eq!(&tested, index.subjects());
    for f in &report.per_fold {
        assert_eq!(f.n_test_frames, 24);
        assert!(f.best_epoch.is_some_and(|e| (1..=2).contains(&e)));
        assert!((0.0..=100.0).contains(&f.accuracy));
        assert!(f.mae * f.mae <= f.mse + 1e-12);
    }
    let mean = report.per_fold.iter().map(|f| f.accuracy).sum::<f64>() / 5.0;
    assert!((report.aggregate.accuracy - mean).abs() < 1e-12);
}

#[test]
fn mismatched_model_and_data_are_rejected() {
    let (_dir, index, frames) = dataset(3, 10, vec![0.5, 0.5]);
    let fold = Fold {
        train: set(&["S01"]),
        val: set(&["S02"]),
        test: set(&["S03"]),
    };
    let config = TrainingConfig::default();
    assert!(train_fold(&index, &frames, 0, &fold, &spec(), &config, &mut |_| {}).is_err());
    let wrong_size = ModelSpec::new(ModelName::ReducedTestNet, 2, 64).with_width(0.25);
    assert!(train_fold(&index, &frames, 0, &fold, &wrong_size, &config, &mut |_| {}).is_err());
}
