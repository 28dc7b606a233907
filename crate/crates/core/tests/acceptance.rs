//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::VecDeque;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use matting_nn::{normalize_pair, Shape};
use msia_matte::compositor::{composite, shapes, synthesize_split, AlphaMatte, ImageRgb, Split};
use msia_matte::losses::{
    blended_loss, lambda_schedule, ssim_loss, total_loss, L1Reduction, LossWeights, SsimParams,
};
use msia_matte::metrics::{connectivity_error, gradient_error, mse, sad, MetricsReport};
use msia_matte::model::{AblationVariant, AssemblyWeights, ModelConfig, MsiaMatte};
use msia_matte::trainer::{
    ablation_suite, evaluate_model, poly_lr, train_on, TrainOptions, TrainingConfig, TrainingData,
    EPOCH_LOG, FINAL_CHECKPOINT, ITERATION_LOG,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || {
        format!("took {elapsed:?}, limit {limit:?}")
    })
}

fn random_matte(rng: &mut impl Rng, w: usize, h: usize, lo: f64, hi: f64) -> AlphaMatte {
    AlphaMatte::new(w, h, (0..w * h).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> ImageRgb {
    ImageRgb::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap()
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let fg = random_image(&mut rng, 16, 16);
        let bg = random_image(&mut rng, 16, 16);
        let alpha = random_matte(&mut rng, 16, 16, 0.0, 1.0);
        let ones = AlphaMatte::filled(16, 16, 1.0).unwrap();
        let zeros = AlphaMatte::filled(16, 16, 0.0).unwrap();
        ensure(composite(&fg, &bg, &ones).unwrap() == fg, || {
            "alpha=1 differs from fg".into()
        })?;
        ensure(composite(&fg, &bg, &zeros).unwrap() == bg, || {
            "alpha=0 differs from bg".into()
        })?;

        let out = composite(&fg, &bg, &alpha).unwrap();
        let half = AlphaMatte::filled(16, 16, 0.5).unwrap();
        let mid = composite(&fg, &bg, &half).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let a = alpha.get(x, y);
                let (f, b, o, m) = (
                    fg.pixel(x, y),
                    bg.pixel(x, y),
                    out.pixel(x, y),
                    mid.pixel(x, y),
                );
                for c in 0..3 {
                    let (f, b) = (f[c] as f64, b[c] as f64);
                    // Linear in alpha: I − B = α (F − B).
                    worst = worst.max(((o[c] as f64 - b) - a * (f - b)).abs());
                    worst = worst.max((m[c] as f64 - 0.5 * (f + b)).abs());
                }
            }
        }
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!(
        "100 triples, max deviation {worst:.1e}, {:?}",
        start.elapsed()
    ))
}

fn criterion_2() -> Check {
    let eps = 1e-8;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut sum_err, mut scale_err, mut graph_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let a = rng.random_range(0.0..10.0);
        let b = rng.random_range(0.0..10.0);
        let w = AssemblyWeights::new(a, b, eps).unwrap();
        let (na, nb) = w.normalized();
        ensure(na > 0.0 && nb > 0.0, || {
            "non-positive normalized weight".into()
        })?;
        sum_err = sum_err.max((na + nb - (1.0 + 2.0 * eps)).abs());
        for k in [1e-3, 1.0, 1e3] {
            let (sa, sb) = AssemblyWeights::new(k * a, k * b, eps)
                .unwrap()
                .normalized();
            scale_err = scale_err.max((sa - na).abs()).max((sb - nb).abs());
        }
        let (ga, gb) = normalize_pair(a as f32, b as f32, eps as f32);
        graph_err = graph_err.max((ga as f64 + gb as f64 - (1.0 + 2.0 * eps)).abs());
    }
    ensure(sum_err <= 1e-6 && graph_err <= 1e-6, || {
        format!("sum error {sum_err:e}, network op {graph_err:e}")
    })?;
    ensure(scale_err <= 1e-9, || {
        format!("scale invariance error {scale_err:e}")
    })?;
    Ok(format!(
        "1000 pairs, sum error {sum_err:.1e} (network op {graph_err:.1e}), scale error {scale_err:.1e}"
    ))
}

fn criterion_3() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let ssim = SsimParams::default();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut skipped = 0;
    for lambda2 in [0.1, 0.025] {
        let w = LossWeights {
            lambda1: 1.0,
            lambda2,
        };
        for _ in 0..20 {
            let pred = random_matte(&mut rng, 16, 16, 0.05, 0.95);
            let gt = random_matte(&mut rng, 16, 16, 0.0, 1.0);
            let (_, grad) = blended_loss(&pred, &gt, &w, &ssim, L1Reduction::Mean).unwrap();
            for k in 0..pred.len() {
                if (pred.data()[k] - gt.data()[k]).abs() < 1e3 * h {
                    skipped += 1;
                    continue;
                }
                let eval = |delta: f64| {
                    let mut d = pred.data().to_vec();
                    d[k] += delta;
                    total_loss(&AlphaMatte::new(16, 16, d).unwrap(), &gt, &w, &ssim).unwrap()
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-12);
                worst = worst.max(rel);
            }
        }
    }
    ensure(worst <= 1e-4, || format!("max relative error {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!(
        "40 pairs, max relative error {worst:.1e}, {skipped} kink pixels skipped, {:?}",
        start.elapsed()
    ))
}

fn criterion_4() -> Check {
    let p = SsimParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (mut self_max, mut sym_max): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let x = random_matte(&mut rng, 24, 24, 0.0, 1.0);
        let y = random_matte(&mut rng, 24, 24, 0.0, 1.0);
        self_max = self_max.max(ssim_loss(&x, &x, &p).unwrap());
        sym_max =
            sym_max.max((ssim_loss(&x, &y, &p).unwrap() - ssim_loss(&y, &x, &p).unwrap()).abs());
    }
    ensure(self_max <= 1e-6, || {
        format!("ssim_loss(x, x) up to {self_max:e}")
    })?;
    ensure(sym_max <= 1e-9, || format!("asymmetry {sym_max:e}"))?;
    let zeros = AlphaMatte::filled(24, 24, 0.0).unwrap();
    let ones = AlphaMatte::filled(24, 24, 1.0).unwrap();
    let checker = AlphaMatte::from_fn(24, 24, |x, y| ((x + y) % 2) as f64).unwrap();
    let inverse = AlphaMatte::from_fn(24, 24, |x, y| ((x + y + 1) % 2) as f64).unwrap();
    let mut extremes = Vec::new();
    for (a, b) in [(&zeros, &ones), (&checker, &inverse), (&checker, &zeros)] {
        for mode in [p, SsimParams::global()] {
            let v = ssim_loss(a, b, &mode).unwrap();
            ensure((0.0..=2.0).contains(&v), || {
                format!("loss {v} outside [0, 2]")
            })?;
            extremes.push(v);
        }
    }
    let hi = extremes.iter().cloned().fold(f64::MIN, f64::max);
    Ok(format!(
        "self {self_max:.1e}, asymmetry {sym_max:.1e}, adversarial max {hi:.4}"
    ))
}

/// Gaussian-derivative kernel built directly as a 2-D array.
fn oracle_kernel() -> (usize, Vec<Vec<f64>>) {
    let sigma: f64 = 1.4;
    let gauss = |x: f64| {
        (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let dgauss = |x: f64| -x * gauss(x) / (sigma * sigma);
    let half = (sigma * (-2.0 * ((2.0 * std::f64::consts::PI).sqrt() * sigma * 1e-2).ln()).sqrt())
        .ceil() as usize;
    let size = 2 * half + 1;
    let mut hx = vec![vec![0.0; size]; size];
    for (i, row) in hx.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = gauss(i as f64 - half as f64) * dgauss(j as f64 - half as f64);
        }
    }
    let norm = hx.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    for v in hx.iter_mut().flatten() {
        *v /= norm;
    }
    (half, hx)
}

/// True 2-D convolution with edge-replicating borders.
fn oracle_convolve(img: &AlphaMatte, k: &[Vec<f64>], half: usize) -> Vec<f64> {
    let (w, h) = img.dims();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, row) in k.iter().enumerate() {
                for (j, kv) in row.iter().enumerate() {
                    let sy =
                        (y as isize + half as isize - i as isize).clamp(0, h as isize - 1) as usize;
                    let sx =
                        (x as isize + half as isize - j as isize).clamp(0, w as isize - 1) as usize;
                    acc += kv * img.get(sx, sy);
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn oracle_gradient(pred: &AlphaMatte, gt: &AlphaMatte) -> f64 {
    let (half, hx) = oracle_kernel();
    let hy: Vec<Vec<f64>> = (0..hx.len())
        .map(|i| (0..hx.len()).map(|j| hx[j][i]).collect())
        .collect();
    let (px, py) = (
        oracle_convolve(pred, &hx, half),
        oracle_convolve(pred, &hy, half),
    );
    let (gx, gy) = (
        oracle_convolve(gt, &hx, half),
        oracle_convolve(gt, &hy, half),
    );
    let mut s = 0.0;
    for i in 0..px.len() {
        s += (px[i] - gx[i]).powi(2) + (py[i] - gy[i]).powi(2);
    }
    s / 1000.0
}

/// Largest 4-connected region by breadth-first flood fill.
fn oracle_largest_region(mask: &[bool], w: usize, h: usize) -> Vec<bool> {
    let mut seen = vec![false; mask.len()];
    let mut best: Vec<usize> = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        let mut region = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            region.push(i);
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        if region.len() > best.len() {
            best = region;
        }
    }
    let mut out = vec![false; mask.len()];
    for i in best {
        out[i] = true;
    }
    out
}

fn oracle_connectivity(pred: &AlphaMatte, gt: &AlphaMatte) -> f64 {
    let (w, h) = pred.dims();
    let n = w * h;
    let thresholds: Vec<f64> = (0..=10).map(|i| i as f64 * 0.1).collect();
    let mut l_map = vec![-1.0; n];
    for i in 1..thresholds.len() {
        let mask: Vec<bool> = (0..n)
            .map(|k| pred.data()[k] >= thresholds[i] && gt.data()[k] >= thresholds[i])
            .collect();
        let omega = oracle_largest_region(&mask, w, h);
        for k in 0..n {
            if l_map[k] == -1.0 && !omega[k] {
                l_map[k] = thresholds[i - 1];
            }
        }
    }
    let mut s = 0.0;
    for (k, &raw) in l_map.iter().enumerate() {
        let l = if raw == -1.0 { 1.0 } else { raw };
        let dp = pred.data()[k] - l;
        let dg = gt.data()[k] - l;
        let pp = 1.0 - if dp >= 0.15 { dp } else { 0.0 };
        let pg = 1.0 - if dg >= 0.15 { dg } else { 0.0 };
        s += (pp - pg).abs();
    }
    s / 1000.0
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut grad_err, mut conn_err): (f64, f64) = (0.0, 0.0);
    for case in 0..100 {
        let w = rng.random_range(8..=16);
        let h = rng.random_range(8..=16);
        let pred = random_matte(&mut rng, w, h, 0.0, 1.0);
        // Blocky ground truth gives connectivity non-trivial regions.
        let gt = if case % 2 == 0 {
            random_matte(&mut rng, w, h, 0.0, 1.0)
        } else {
            let levels: Vec<f64> = (0..4).map(|_| rng.random()).collect();
            AlphaMatte::from_fn(w, h, |x, y| levels[(x * 2 / w) * 2 + y * 2 / h]).unwrap()
        };
        let mut sad_o = 0.0;
        let mut mse_o = 0.0;
        for y in 0..h {
            for x in 0..w {
                let d = pred.get(x, y) - gt.get(x, y);
                sad_o += d.abs();
                mse_o += d * d;
            }
        }
        ensure(sad(&pred, &gt).unwrap() == sad_o / 1000.0, || {
            format!("SAD mismatch on case {case}")
        })?;
        ensure(mse(&pred, &gt).unwrap() == mse_o / (w * h) as f64, || {
            format!("MSE mismatch on case {case}")
        })?;
        grad_err =
            grad_err.max((gradient_error(&pred, &gt).unwrap() - oracle_gradient(&pred, &gt)).abs());
        conn_err = conn_err
            .max((connectivity_error(&pred, &gt).unwrap() - oracle_connectivity(&pred, &gt)).abs());
    }
    ensure(grad_err <= 1e-9, || {
        format!("gradient deviation {grad_err:e}")
    })?;
    ensure(conn_err <= 1e-9, || {
        format!("connectivity deviation {conn_err:e}")
    })?;
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "100 pairs, SAD/MSE exact, gradient {grad_err:.1e}, connectivity {conn_err:.1e}, {:?}",
        start.elapsed()
    ))
}

fn criterion_6() -> Check {
    let start = Instant::now();
    let expected = [
        ("block1", 4),
        ("deep", 16),
        ("f_ini", 4),
        ("f_sed", 8),
        ("f_ia", 8),
    ];
    let model = MsiaMatte::new(ModelConfig::default(), 6).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    for size in [64, 128, 512] {
        let img = random_image(&mut rng, size, size);
        let maps = model.feature_maps(&img).map_err(|e| e.to_string())?;
        for (name, stride) in expected {
            let m = maps
                .iter()
                .find(|m| m.name == name)
                .ok_or_else(|| format!("{name} missing at {size}"))?;
            ensure(m.stride == stride, || {
                format!("{name} declared stride {}", m.stride)
            })?;
            m.check(size, size).map_err(|e| e.to_string())?;
        }
        let alpha = maps
            .iter()
            .find(|m| m.name == "alpha")
            .ok_or("alpha missing")?;
        ensure(alpha.tensor.shape() == Shape::new(1, 1, size, size), || {
            format!("alpha shape {} at {size}", alpha.tensor.shape())
        })?;
        ensure(
            alpha
                .tensor
                .data()
                .iter()
                .all(|v| v.is_finite() && *v > 0.0 && *v < 1.0),
            || format!("alpha outside (0, 1) at {size}"),
        )?;
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "64/128/512 inputs, strides 4/16/4/8/8, {:?}",
        start.elapsed()
    ))
}

fn synthetic_manifest(
    dir: &Path,
    count: usize,
    size: usize,
    seed: u64,
) -> msia_matte::compositor::DatasetManifest {
    let fgs = shapes::synthetic_foregrounds(count, size, size, seed);
    let bgs = shapes::synthetic_backgrounds(count, size, size, seed + 1);
    let out = synthesize_split(&fgs, &bgs, 1, seed + 2, Split::Train, dir).unwrap();
    assert!(out.failures.is_empty());
    out.manifest.unwrap()
}

fn criterion_7() -> Check {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = synthetic_manifest(dir.path(), 4, 128, 7);
    let data = TrainingData::from_manifest(&manifest).map_err(|e| e.to_string())?;
    let cfg = TrainingConfig {
        epochs: 200,
        batch_size: 4,
        crop_sizes: vec![128],
        target_size: 128,
        seed: 7,
        ..TrainingConfig::desk()
    };
    ensure(
        (cfg.momentum, cfg.weight_decay, cfg.poly_power) == (0.9, 0.0005, 0.9),
        || "optimizer settings differ from the recipe".into(),
    )?;
    let untrained = MsiaMatte::new(cfg.model_config(), cfg.seed).map_err(|e| e.to_string())?;
    let before = evaluate_model(&untrained, &manifest)
        .map_err(|e| e.to_string())?
        .means
        .sad;
    let outcome = train_on(&cfg, &data, TrainOptions::default()).map_err(|e| e.to_string())?;
    let log = &outcome.log.iterations;
    ensure(log.len() == 200, || {
        format!("{} iterations logged", log.len())
    })?;
    let (first, last) = (log[0].total, log[log.len() - 1].total);
    let after = evaluate_model(&outcome.model, &manifest)
        .map_err(|e| e.to_string())?
        .means
        .sad;
    ensure(last < 0.25 * first, || {
        format!("loss {first:.4} -> {last:.4}")
    })?;
    ensure(after < before, || format!("SAD {before:.3} -> {after:.3}"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!(
        "loss {first:.4} -> {last:.4} ({:.1}%), SAD {before:.3} -> {after:.3}, {:?}",
        100.0 * last / first,
        start.elapsed()
    ))
}

fn criterion_8() -> Check {
    let start = Instant::now();
    let counts: Vec<usize> = AblationVariant::ALL
        .iter()
        .map(|&v| {
            MsiaMatte::new(ModelConfig::default().with_variant(v), 8).map(|m| m.num_parameters())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure(counts[0] < counts[1] && counts[1] < counts[2], || {
        format!("counts {counts:?}")
    })?;
    ensure(counts[3] == counts[2] + 2, || format!("counts {counts:?}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = synthetic_manifest(dir.path(), 2, 64, 8);
    let data = TrainingData::from_manifest(&manifest).map_err(|e| e.to_string())?;
    let cfg = TrainingConfig {
        epochs: 0,
        crop_sizes: vec![64],
        target_size: 64,
        ..TrainingConfig::desk()
    };
    let result = ablation_suite(&cfg, &data, &manifest, None).map_err(|e| e.to_string())?;
    let table = result.table();
    let lines: Vec<&str> = table.lines().collect();
    ensure(lines.len() == 5, || {
        format!("table has {} lines", lines.len())
    })?;
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    ensure(
        header == ["Method", "SAD", "MSE", "Gradient", "Connectivity"],
        || format!("header {header:?}"),
    )?;
    for (line, v) in lines[1..].iter().zip(AblationVariant::ALL) {
        ensure(line.starts_with(v.table_label()), || {
            format!("row order: {line}")
        })?;
        let numbers = line[v.table_label().len()..]
            .split_whitespace()
            .filter(|s| s.parse::<f64>().is_ok())
            .count();
        ensure(numbers == 4, || {
            format!("row {line} has {numbers} metric values")
        })?;
    }
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!(
        "parameters {counts:?}, 4x4 table, {:?}",
        start.elapsed()
    ))
}

fn criterion_9() -> Check {
    ensure(poly_lr(0, 1000, 0.01, 0.9).unwrap() == 0.01, || {
        "poly_lr(0) != 0.01".into()
    })?;
    ensure(poly_lr(1000, 1000, 0.01, 0.9).unwrap() == 0.0, || {
        "poly_lr(total) != 0".into()
    })?;
    ensure(
        lambda_schedule(1).unwrap()
            == LossWeights {
                lambda1: 1.0,
                lambda2: 0.1,
            },
        || "epoch 1 weights".into(),
    )?;
    for e in 2..=20 {
        ensure(
            lambda_schedule(e).unwrap()
                == LossWeights {
                    lambda1: 1.0,
                    lambda2: 0.025,
                },
            || format!("epoch {e} weights"),
        )?;
    }
    Ok("poly endpoints exact, lambda (1, 0.1) then (1, 0.025)".into())
}

/// Synthesizes, trains for 50 iterations and evaluates into `dir`,
/// returning the paths of every artifact to compare.
fn deterministic_run(dir: &Path) -> Vec<std::path::PathBuf> {
    let manifest = synthetic_manifest(dir, 4, 64, 10);
    let data = TrainingData::from_manifest(&manifest).unwrap();
    let cfg = TrainingConfig {
        epochs: 50,
        batch_size: 4,
        crop_sizes: vec![64, 96],
        target_size: 64,
        seed: 10,
        checkpoint_every: 25,
        ..TrainingConfig::desk()
    };
    let run = dir.join("run");
    let outcome = train_on(
        &cfg,
        &data,
        TrainOptions {
            out_dir: Some(run.clone()),
            eval: Some(manifest.clone()),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(outcome.log.iterations.len(), 50);
    let report = evaluate_model(&outcome.model, &manifest).unwrap();
    report.save(&dir.join("report.json")).unwrap();
    vec![
        dir.join("train.jsonl"),
        run.join(ITERATION_LOG),
        run.join(EPOCH_LOG),
        dir.join("report.json"),
        run.join(FINAL_CHECKPOINT),
    ]
}

fn criterion_10() -> Check {
    let start = Instant::now();
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pa = deterministic_run(a.path());
    let pb = deterministic_run(b.path());
    for (x, y) in pa.iter().zip(&pb) {
        let bx = fs::read(x).map_err(|e| format!("{}: {e}", x.display()))?;
        let by = fs::read(y).map_err(|e| format!("{}: {e}", y.display()))?;
        ensure(bx == by, || {
            format!(
                "{} differs between runs",
                x.file_name().unwrap().to_string_lossy()
            )
        })?;
    }
    MetricsReport::load(&a.path().join("report.json")).map_err(|e| e.to_string())?;
    Ok(format!(
        "manifest, log, report and checkpoint byte-identical, {:?}",
        start.elapsed()
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("compositing identities", criterion_1),
        ("assembly normalization", criterion_2),
        ("loss gradient check", criterion_3),
        ("SSIM loss identities", criterion_4),
        ("metric oracle equivalence", criterion_5),
        ("shape and stride audit", criterion_6),
        ("overfit smoke test", criterion_7),
        ("ablation harness", criterion_8),
        ("schedules", criterion_9),
        ("determinism", criterion_10),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .and_then(|v| v.parse().ok());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
