//! Optimization loop, augmentation, evaluation and the ablation harness.

mod ablation;
mod augment;
mod config;
mod log;

pub use ablation::{ablation_suite, AblationResult, AblationRow};
pub use augment::{augment, AugmentParams, CROP_RETRIES};
pub use config::{L1ReductionName, TrainingConfig};
pub use log::{EpochRecord, IterationRecord, TrainLog, EPOCH_LOG, ITERATION_LOG};

use std::fs;
use std::path::{Path, PathBuf};

use matting_nn::{Graph, Mode, Sgd, Shape, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::compositor::{AlphaMatte, DatasetManifest, ImageRgb};
use crate::error::{MattingError, Result};
use crate::losses::{blended_loss, lambda_schedule, LossTerms, LossWeights, SsimParams};
use crate::metrics::{evaluate_with, MetricsReport};
use crate::model::{images_to_tensor, AblationVariant, AlphaPredictor, Checkpoint, MsiaMatte};

/// `lr0 · (1 − iter/total_iters)^power`.
pub fn poly_lr(iter: usize, total_iters: usize, lr0: f64, power: f64) -> Result<f64> {
    if total_iters == 0 {
        return Err(MattingError::InvalidArgument(
            "total_iters must be positive".into(),
        ));
    }
    if iter > total_iters {
        return Err(MattingError::InvalidArgument(format!(
            "iteration {iter} is past the schedule end {total_iters}"
        )));
    }
    Ok(lr0 * (1.0 - iter as f64 / total_iters as f64).powf(power))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream seed for a `(seed, parts…)` coordinate.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ p))
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub key: String,
    pub image: ImageRgb,
    pub alpha: AlphaMatte,
}

/// Samples held in memory for the duration of a run.
#[derive(Clone, Debug, Default)]
pub struct TrainingData {
    pub samples: Vec<Sample>,
}

impl TrainingData {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        let samples = manifest
            .records
            .iter()
            .map(|r| {
                let (image, alpha) = manifest.load_record(r)?;
                Ok(Sample {
                    key: r.key(),
                    image,
                    alpha,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn batches_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Where checkpoints and logs go; nothing is written when absent.
    pub out_dir: Option<PathBuf>,
    /// Scored after every epoch.
    pub eval: Option<DatasetManifest>,
    pub on_iteration: Option<&'a mut dyn FnMut(&IterationRecord)>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: MsiaMatte,
    pub optimizer: Sgd,
    pub log: TrainLog,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

#[derive(Serialize)]
struct DivergenceDump<'a> {
    iteration: usize,
    epoch: usize,
    lr: f64,
    samples: Vec<&'a str>,
    input_min: f32,
    input_max: f32,
    loss: Option<[f64; 3]>,
    weight_norm: f64,
    gradient_norm: Option<f64>,
}

pub const FINAL_CHECKPOINT: &str = "final.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";

fn write_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(MattingError::io(dir))?;
    }
    ckpt.save(path)?;
    Ok(path.to_owned())
}

fn link_best(out_dir: &Path, target: &Path) -> Result<()> {
    let link = out_dir.join(BEST_CHECKPOINT);
    if link.symlink_metadata().is_ok() {
        fs::remove_file(&link).map_err(MattingError::io(&link))?;
    }
    #[cfg(unix)]
    {
        let rel = target.strip_prefix(out_dir).unwrap_or(target);
        std::os::unix::fs::symlink(rel, &link).map_err(MattingError::io(&link))
    }
    #[cfg(not(unix))]
    {
        fs::copy(target, &link)
            .map(|_| ())
            .map_err(MattingError::io(&link))
    }
}

/// Scores `model` on every record of `manifest` at full resolution.
pub fn evaluate_model(
    model: &impl AlphaPredictor,
    manifest: &DatasetManifest,
) -> Result<MetricsReport> {
    evaluate_with(manifest, false, |record| {
        let image = ImageRgb::load(&manifest.resolve(&record.composite))?;
        model.predict(&image).map(Some)
    })
}

/// Loads a checkpoint, optionally checking its variant, and evaluates it.
pub fn evaluate_checkpoint(
    path: &Path,
    manifest: &DatasetManifest,
    expected: Option<AblationVariant>,
) -> Result<MetricsReport> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(v) = expected {
        ckpt.check_variant(v)?;
    }
    evaluate_model(&ckpt.build_model()?, manifest)
}

/// Loads the manifests named by `cfg` and trains, writing into `out_dir`.
pub fn train(cfg: &TrainingConfig, out_dir: &Path) -> Result<TrainOutcome> {
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let data = TrainingData::from_manifest(&manifest)?;
    let eval = cfg
        .eval_manifest
        .as_deref()
        .map(DatasetManifest::load)
        .transpose()?;
    train_on(
        cfg,
        &data,
        TrainOptions {
            out_dir: Some(out_dir.to_owned()),
            eval,
            on_iteration: None,
        },
    )
}

struct StepResult {
    terms: LossTerms,
}

pub fn train_on(
    cfg: &TrainingConfig,
    data: &TrainingData,
    mut opts: TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(MattingError::InvalidArgument(
            "training set is empty".into(),
        ));
    }
    let mut model = MsiaMatte::new(cfg.model_config(), cfg.seed)?;
    if let Some(w) = &cfg.backbone_weights {
        model.load_backbone_weights(w)?;
    }
    let mut optimizer = Sgd::new(cfg.momentum as f32, cfg.weight_decay as f32);
    let aug = AugmentParams {
        crop_sizes: cfg.crop_sizes.clone(),
        target_size: cfg.target_size,
        flip_prob: cfg.flip_prob,
    };
    let ssim = SsimParams::default();
    let per_epoch = batches_per_epoch(data.len(), cfg.batch_size);
    let total_iters = cfg.epochs * per_epoch;
    let mut log = TrainLog::default();
    let mut checkpoints = Vec::new();
    let mut best_sad = f64::INFINITY;
    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir).map_err(MattingError::io(dir))?;
    }

    let mut iter = 0;
    for epoch in 1..=cfg.epochs {
        let weights = lambda_schedule(epoch)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &[epoch as u64],
        )));
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let lr = poly_lr(iter, total_iters, cfg.lr0, cfg.poly_power)?;
            let samples = batch
                .iter()
                .enumerate()
                .map(|(slot, &i)| {
                    let s = &data.samples[i];
                    let seed = derive_seed(cfg.seed, &[epoch as u64, iter as u64, slot as u64]);
                    augment(&s.image, &s.alpha, &aug, seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let keys: Vec<&str> = batch
                .iter()
                .map(|&i| data.samples[i].key.as_str())
                .collect();
            let step = train_step(
                &mut model,
                &mut optimizer,
                &samples,
                &weights,
                &ssim,
                cfg,
                lr,
            )
            .map_err(|failure| {
                let diagnostic =
                    divergence_report(&model, &samples, &keys, failure, iter, epoch, lr);
                if let Some(dir) = &opts.out_dir {
                    let _ = log.save(dir);
                    let _ = fs::write(dir.join("divergence.json"), &diagnostic);
                }
                MattingError::Diverged {
                    iteration: iter,
                    diagnostic,
                }
            })?;
            let record = IterationRecord {
                iter,
                epoch,
                lr,
                lambda1: weights.lambda1,
                lambda2: weights.lambda2,
                l1: step.terms.l1,
                ssim: step.terms.ssim,
                total: step.terms.total,
            };
            if let Some(cb) = opts.on_iteration.as_mut() {
                cb(&record);
            }
            epoch_total += record.total;
            log.iterations.push(record);
            iter += 1;
        }

        let mut saved = None;
        if let Some(dir) = &opts.out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                let ckpt = Checkpoint::capture(&model, Some(&optimizer), epoch, iter);
                let p = write_checkpoint(
                    &ckpt,
                    &dir.join("checkpoints")
                        .join(format!("epoch_{epoch:03}.ckpt")),
                )?;
                checkpoints.push(p.clone());
                saved = Some(p);
            }
        }
        let mut record = EpochRecord {
            epoch,
            mean_total: epoch_total / per_epoch as f64,
            sad: None,
            mse: None,
            gradient: None,
            connectivity: None,
        };
        if let Some(eval) = &opts.eval {
            let m = evaluate_model(&model, eval)?.means;
            record.sad = Some(m.sad);
            record.mse = Some(m.mse);
            record.gradient = Some(m.gradient);
            record.connectivity = Some(m.connectivity);
            if let (Some(dir), Some(p)) = (&opts.out_dir, &saved) {
                if m.sad < best_sad {
                    best_sad = m.sad;
                    link_best(dir, p)?;
                }
            }
        }
        log.epochs.push(record);
        if let Some(dir) = &opts.out_dir {
            log.save(dir)?;
        }
    }

    let final_checkpoint = match &opts.out_dir {
        Some(dir) => {
            let ckpt = Checkpoint::capture(&model, Some(&optimizer), cfg.epochs, iter);
            let p = write_checkpoint(&ckpt, &dir.join(FINAL_CHECKPOINT))?;
            log.save(dir)?;
            Some(p)
        }
        None => None,
    };
    Ok(TrainOutcome {
        model,
        optimizer,
        log,
        checkpoints,
        final_checkpoint,
    })
}

enum StepFailure {
    NonFiniteOutput,
    NonFiniteLoss(LossTerms),
    NonFiniteGradient(LossTerms, f64),
    Other(MattingError),
}

impl From<MattingError> for StepFailure {
    fn from(e: MattingError) -> Self {
        Self::Other(e)
    }
}

impl From<matting_nn::NnError> for StepFailure {
    fn from(e: matting_nn::NnError) -> Self {
        Self::Other(e.into())
    }
}

/// One SGD step on the mean per-sample loss of the batch.
fn train_step(
    model: &mut MsiaMatte,
    optimizer: &mut Sgd,
    samples: &[(ImageRgb, AlphaMatte)],
    weights: &LossWeights,
    ssim: &SsimParams,
    cfg: &TrainingConfig,
    lr: f64,
) -> std::result::Result<StepResult, StepFailure> {
    let images: Vec<&ImageRgb> = samples.iter().map(|(i, _)| i).collect();
    let mut g = Graph::new(model.store(), Mode::Train);
    let x = g.input(images_to_tensor(&images)?);
    let out = model.forward(&mut g, x)?;
    let pred = g.value(out.alpha);
    if !pred.all_finite() {
        return Err(StepFailure::NonFiniteOutput);
    }
    let Shape { n, h, w, .. } = pred.shape();
    let mut seed = Tensor::zeros(pred.shape());
    let mut terms = LossTerms {
        l1: 0.0,
        ssim: 0.0,
        total: 0.0,
    };
    for (i, (_, gt)) in samples.iter().enumerate() {
        let p = AlphaMatte::new(w, h, pred.plane(i, 0).iter().map(|&v| v as f64).collect())?;
        let (t, grad) = blended_loss(&p, gt, weights, ssim, cfg.l1_reduction.into())?;
        terms.l1 += t.l1 / n as f64;
        terms.ssim += t.ssim / n as f64;
        terms.total += t.total / n as f64;
        for (s, gv) in seed.plane_mut(i, 0).iter_mut().zip(grad) {
            *s = (gv / n as f64) as f32;
        }
    }
    if !terms.total.is_finite() {
        return Err(StepFailure::NonFiniteLoss(terms));
    }
    let grads = g.backward(out.alpha, seed)?;
    let gnorm = grads.sq_norm();
    if !gnorm.is_finite() {
        return Err(StepFailure::NonFiniteGradient(terms, gnorm));
    }
    let updates = g.into_buffer_updates();
    optimizer.step(model.store_mut(), &grads, lr as f32);
    model.store_mut().apply_updates(updates);
    Ok(StepResult { terms })
}

fn divergence_report(
    model: &MsiaMatte,
    samples: &[(ImageRgb, AlphaMatte)],
    keys: &[&str],
    failure: StepFailure,
    iteration: usize,
    epoch: usize,
    lr: f64,
) -> String {
    let (loss, gradient_norm, cause) = match failure {
        StepFailure::NonFiniteOutput => (None, None, "non-finite prediction".to_owned()),
        StepFailure::NonFiniteLoss(t) => (
            Some([t.l1, t.ssim, t.total]),
            None,
            "non-finite loss".to_owned(),
        ),
        StepFailure::NonFiniteGradient(t, g) => (
            Some([t.l1, t.ssim, t.total]),
            Some(g),
            "non-finite gradient".to_owned(),
        ),
        StepFailure::Other(e) => (None, None, e.to_string()),
    };
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    for (img, _) in samples {
        for &v in img.data() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    let dump = DivergenceDump {
        iteration,
        epoch,
        lr,
        samples: keys.to_vec(),
        input_min: lo,
        input_max: hi,
        loss,
        weight_norm: model.store().weight_sq_norm().sqrt(),
        gradient_norm: gradient_norm.map(f64::sqrt),
    };
    format!(
        "{cause}; {}",
        serde_json::to_string(&dump).expect("dump serializes")
    )
}
