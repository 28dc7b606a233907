use std::path::Path;

use msia_matte::compositor::{
    shapes, synthesize_split, AlphaMatte, DatasetManifest, ImageRgb, Split,
};
use msia_matte::losses::lambda_schedule;
use msia_matte::metrics::evaluate_with;
use msia_matte::model::checkpoint::TensorRole;
use msia_matte::model::{AlphaPredictor, Checkpoint, MsiaMatte};
use msia_matte::trainer::{
    ablation_suite, batches_per_epoch, poly_lr, train_on, TrainLog, TrainOptions, TrainingConfig,
    TrainingData, FINAL_CHECKPOINT, ITERATION_LOG,
};
use msia_matte::MattingError;

fn dataset(dir: &Path, count: usize, size: usize) -> DatasetManifest {
    let fgs = shapes::synthetic_foregrounds(count, size, size, 21);
    let bgs = shapes::synthetic_backgrounds(count, size, size, 22);
    synthesize_split(&fgs, &bgs, 1, 23, Split::Train, dir)
        .unwrap()
        .manifest
        .unwrap()
}

fn small_config(epochs: usize) -> TrainingConfig {
    TrainingConfig {
        epochs,
        batch_size: 2,
        crop_sizes: vec![64],
        target_size: 64,
        seed: 5,
        ..TrainingConfig::desk()
    }
}

#[test]
fn zero_epochs_leave_initial_weights() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 64);
    let data = TrainingData::from_manifest(&manifest).unwrap();
    let cfg = small_config(0);
    let out = dir.path().join("run");
    let outcome = train_on(
        &cfg,
        &data,
        TrainOptions {
            out_dir: Some(out.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    assert!(outcome.log.iterations.is_empty());
    let saved = Checkpoint::load(&out.join(FINAL_CHECKPOINT)).unwrap();
    let fresh = Checkpoint::capture(
        &MsiaMatte::new(cfg.model_config(), cfg.seed).unwrap(),
        None,
        0,
        0,
    );
    let params = |c: &Checkpoint| {
        c.tensors
            .iter()
            .filter(|t| t.role == TensorRole::Param)
            .cloned()
            .collect::<Vec<_>>()
    };
    assert_eq!(params(&saved), params(&fresh));
}

#[test]
fn logged_schedules_follow_poly_and_lambda_rules() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 3, 64);
    let data = TrainingData::from_manifest(&manifest).unwrap();
    let cfg = small_config(3);
    let out = dir.path().join("run");
    let mut seen = 0;
    let mut count = |_: &_| seen += 1;
    train_on(
        &cfg,
        &data,
        TrainOptions {
            out_dir: Some(out.clone()),
            on_iteration: Some(&mut count),
            ..Default::default()
        },
    )
    .unwrap();
    let per_epoch = batches_per_epoch(3, 2);
    assert_eq!(per_epoch, 2);
    let total = cfg.epochs * per_epoch;
    let rows = TrainLog::load_iterations(&out.join(ITERATION_LOG)).unwrap();
    assert_eq!(rows.len(), total);
    assert_eq!(seen, total);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.iter, i);
        assert_eq!(r.epoch, i / per_epoch + 1);
        let lr = poly_lr(i, total, cfg.lr0, cfg.poly_power).unwrap();
        assert!(
            (r.lr - lr).abs() <= 1e-15 * lr.max(1.0),
            "iter {i}: {} vs {lr}",
            r.lr
        );
        let w = lambda_schedule(r.epoch).unwrap();
        assert_eq!((r.lambda1, r.lambda2), (w.lambda1, w.lambda2));
        assert!(r.total.is_finite() && r.l1 >= 0.0 && r.ssim >= 0.0);
    }
}

#[test]
fn huge_learning_rate_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 64);
    let data = TrainingData::from_manifest(&manifest).unwrap();
    let cfg = TrainingConfig {
        lr0: 1e12,
        ..small_config(5)
    };
    let out = dir.path().join("run");
    let err = train_on(
        &cfg,
        &data,
        TrainOptions {
            out_dir: Some(out.clone()),
            ..Default::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, MattingError::Diverged { .. }), "{err}");
    assert!(out.join("divergence.json").exists());
}

struct Constant(f64);

impl AlphaPredictor for Constant {
    fn predict(&self, image: &ImageRgb) -> msia_matte::Result<AlphaMatte> {
        let (w, h) = image.dims();
        AlphaMatte::filled(w, h, self.0)
    }
}

#[test]
fn perfect_and_constant_predictors_score_as_expected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 32);

    let perfect = evaluate_with(&manifest, false, |r| {
        AlphaMatte::load(&manifest.resolve(&r.alpha)).map(Some)
    })
    .unwrap();
    let m = perfect.means;
    assert_eq!(
        (m.sad, m.mse, m.gradient, m.connectivity),
        (0.0, 0.0, 0.0, 0.0)
    );

    // A binary ground truth against a flat 0.5 prediction: SAD = 0.5·N/1000.
    let binary = AlphaMatte::from_fn(32, 32, |x, _| if x < 16 { 1.0 } else { 0.0 }).unwrap();
    let half = Constant(0.5);
    let report = evaluate_with(&manifest, false, |r| {
        let image = ImageRgb::load(&manifest.resolve(&r.composite))?;
        half.predict(&image).map(Some)
    })
    .unwrap();
    assert_eq!(report.images.len(), 2);
    assert!(report.means.sad > 0.0);
    let flat = half
        .predict(&ImageRgb::filled(32, 32, [0.0; 3]).unwrap())
        .unwrap();
    let direct = msia_matte::metrics::sad(&flat, &binary).unwrap();
    assert!((direct - 0.5 * 1024.0 / 1000.0).abs() < 1e-12);
}

#[test]
fn untrained_variants_score_alike() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 2, 64);
    let data = TrainingData::from_manifest(&manifest).unwrap();
    let out = dir.path().join("ablation");
    let result = ablation_suite(&small_config(0), &data, &manifest, Some(&out)).unwrap();
    assert_eq!(result.rows.len(), 4);
    let sads: Vec<f64> = result.rows.iter().map(|r| r.report.means.sad).collect();
    let mean = sads.iter().sum::<f64>() / sads.len() as f64;
    for s in &sads {
        assert!((s - mean).abs() <= 0.05 * mean, "{sads:?}");
    }
    for row in &result.rows {
        assert!(out.join(format!("{}.json", row.variant.as_str())).exists());
    }
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.toml");
    std::fs::write(
        &path,
        "epochs = 3\nbatch_size = 8\nablation_variant = \"inist\"\n",
    )
    .unwrap();
    let cfg = TrainingConfig::load(&path, &[("epochs".into(), "7".into())]).unwrap();
    assert_eq!((cfg.epochs, cfg.batch_size), (7, 8));
    assert_eq!(cfg.ablation_variant.as_str(), "inist");

    let bad = TrainingConfig::load(&path, &[("crop_sizes".into(), "[16]".into())]).unwrap_err();
    assert!(bad.is_input_error(), "{bad}");
    let unknown = TrainingConfig::load(&path, &[("lr".into(), "0.1".into())]).unwrap_err();
    assert!(unknown.to_string().contains("lr"), "{unknown}");
}
