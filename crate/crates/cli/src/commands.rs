use std::fs;
use std::path::{Path, PathBuf};

use msia_matte::compositor::{
    shapes, synthesize_from_dirs, synthesize_split, DatasetManifest, ImageRgb, SynthOutcome,
};
use msia_matte::metrics::{comparison_table, evaluate, evaluate_with, MetricsReport};
use msia_matte::model::{AblationVariant, AlphaPredictor, Checkpoint, MsiaMatte};
use msia_matte::trainer::{ablation_suite, TrainingConfig, TrainingData, EPOCH_LOG, ITERATION_LOG};
use msia_matte::MattingError;

use crate::render;
use crate::{
    AblateArgs, CliError, Common, EvalArgs, PredictArgs, ReportArgs, SynthArgs, TrainArgs,
};

type Result<T> = std::result::Result<T, CliError>;

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    raw.iter()
        .map(|kv| match kv.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.trim().to_owned())),
            _ => Err(CliError::Usage(format!(
                "override `{kv}` is not of the form key=value"
            ))),
        })
        .collect()
}

/// The configuration file (or defaults) with overrides applied and validated.
fn load_config(common: &Common) -> Result<TrainingConfig> {
    let overrides = parse_overrides(&common.overrides)?;
    Ok(match &common.config {
        Some(path) => TrainingConfig::load(path, &overrides)?,
        None => TrainingConfig::from_toml_with_overrides("", &overrides)?,
    })
}

/// Loads the configuration only to validate it when one was given.
fn validate_unused_config(common: &Common) -> Result<()> {
    if common.config.is_some() || !common.overrides.is_empty() {
        load_config(common)?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Matting(MattingError::Io {
            path: dir.to_owned(),
            source,
        })
    })
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    fs::write(path, body).map_err(|source| {
        CliError::Matting(MattingError::Io {
            path: path.to_owned(),
            source,
        })
    })
}

fn require_dir(flag: &str, dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "{flag} {} is not a directory",
            dir.display()
        )))
    }
}

fn load_model(path: &Path, variant: Option<AblationVariant>) -> Result<MsiaMatte> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(v) = variant {
        ckpt.check_variant(v)?;
    }
    Ok(ckpt.build_model()?)
}

pub fn synth(common: &Common, args: &SynthArgs) -> Result<()> {
    validate_unused_config(common)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| common.output_root.join("data"));
    let outcome: SynthOutcome = match (&args.fg_dir, args.shapes) {
        (Some(fg), _) => {
            let (alpha, bg) = (
                args.alpha_dir.as_deref().expect("required by clap"),
                args.bg_dir.as_deref().expect("required by clap"),
            );
            require_dir("--fg-dir", fg)?;
            require_dir("--alpha-dir", alpha)?;
            require_dir("--bg-dir", bg)?;
            synthesize_from_dirs(fg, alpha, bg, args.per_fg, args.seed, args.split, &out)?
        }
        (None, Some(count)) => {
            let fgs = shapes::synthetic_foregrounds(count, args.size, args.size, args.seed);
            let bgs =
                shapes::synthetic_backgrounds(args.backgrounds, args.size, args.size, args.seed);
            synthesize_split(&fgs, &bgs, args.per_fg, args.seed, args.split, &out)?
        }
        (None, None) => {
            return Err(CliError::Usage(
                "give either --fg-dir/--alpha-dir/--bg-dir or --shapes".into(),
            ))
        }
    };
    if !outcome.failures.is_empty() {
        let report = out.join(format!("{}_failures.json", args.split));
        let body = serde_json::to_string_pretty(&outcome.failures).expect("failures serialize");
        write_text(&report, &(body + "\n"))?;
        for f in &outcome.failures {
            eprintln!(
                "failed: {} ({}): {}",
                f.asset,
                f.record.as_deref().unwrap_or("foreground"),
                f.error
            );
        }
        return Err(CliError::SynthFailures {
            failed: outcome.failures.len(),
            report,
        });
    }
    let manifest = outcome.manifest.expect("present without failures");
    println!(
        "wrote {} composite(s) for {} foreground(s)",
        manifest.len(),
        manifest.per_foreground_counts().len()
    );
    println!("manifest: {}", outcome.manifest_path.display());
    Ok(())
}

pub fn train(common: &Common, args: &TrainArgs) -> Result<()> {
    let cfg = load_config(common)?;
    let out = args.out.clone().unwrap_or_else(|| {
        common
            .output_root
            .join("train")
            .join(cfg.ablation_variant.as_str())
    });
    create_dir(&out)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    let outcome = msia_matte::trainer::train(&cfg, &out)?;
    if let Some(last) = outcome.log.iterations.last() {
        let first = &outcome.log.iterations[0];
        println!(
            "{} iteration(s), loss {:.5} -> {:.5}",
            outcome.log.iterations.len(),
            first.total,
            last.total
        );
    }
    println!("config: {}", out.join("config.toml").display());
    println!("iteration log: {}", out.join(ITERATION_LOG).display());
    println!("epoch log: {}", out.join(EPOCH_LOG).display());
    for c in &outcome.checkpoints {
        println!("checkpoint: {}", c.display());
    }
    if let Some(f) = &outcome.final_checkpoint {
        println!("final checkpoint: {}", f.display());
    }
    Ok(())
}

pub fn eval(common: &Common, args: &EvalArgs) -> Result<()> {
    validate_unused_config(common)?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let mut report = match (&args.checkpoint, &args.predictions) {
        (Some(ckpt), _) => {
            let model = load_model(ckpt, args.variant)?;
            if let Some(dir) = &args.save_predictions {
                create_dir(dir)?;
            }
            evaluate_with(&manifest, args.exclude_missing, |record| {
                let image = ImageRgb::load(&manifest.resolve(&record.composite))?;
                let alpha = model.predict(&image)?;
                if let Some(dir) = &args.save_predictions {
                    alpha.save_png(&dir.join(format!("{}.png", record.key())))?;
                }
                Ok(Some(alpha))
            })?
        }
        (None, Some(dir)) => {
            require_dir("--predictions", dir)?;
            evaluate(&manifest, dir, args.exclude_missing)?
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if let Some(label) = &args.label {
        report = report.with_label(label.clone());
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| common.output_root.join("eval").join("report.json"));
    write_text(&out, &report.to_json())?;
    let label = report.label.clone().unwrap_or_else(|| "prediction".into());
    print!("{}", comparison_table(&[(&label, &report)]));
    if !report.missing.is_empty() {
        println!(
            "excluded {} record(s) without predictions",
            report.missing.len()
        );
    }
    println!("report: {}", out.display());
    if let Some(dir) = &args.save_predictions {
        println!("predictions: {}", dir.display());
    }
    Ok(())
}

pub fn ablate(common: &Common, args: &AblateArgs) -> Result<()> {
    let cfg = load_config(common)?;
    let eval_path = args
        .eval_manifest
        .clone()
        .or_else(|| cfg.eval_manifest.clone())
        .unwrap_or_else(|| cfg.manifest.clone());
    let data = TrainingData::from_manifest(&DatasetManifest::load(&cfg.manifest)?)?;
    let eval_manifest = DatasetManifest::load(&eval_path)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| common.output_root.join("ablation"));
    create_dir(&out)?;
    let result = ablation_suite(&cfg, &data, &eval_manifest, Some(&out))?;
    let table = result.table();
    let table_path = out.join("ablation.txt");
    write_text(&table_path, &table)?;
    print!("{table}");
    for row in &result.rows {
        println!(
            "{}: {} parameters, run {}, report {}",
            row.variant,
            row.parameters,
            out.join(row.variant.as_str()).display(),
            out.join(format!("{}.json", row.variant)).display()
        );
    }
    println!("table: {}", table_path.display());
    Ok(())
}

pub fn predict(common: &Common, args: &PredictArgs) -> Result<()> {
    validate_unused_config(common)?;
    let model = load_model(&args.checkpoint, args.variant)?;
    let image = ImageRgb::load(&args.input)?;
    let alpha = model.predict(&image)?;
    let output = args.output.clone().unwrap_or_else(|| {
        let stem = args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "input".into());
        common
            .output_root
            .join("predict")
            .join(format!("{stem}_alpha.png"))
    });
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    alpha.save_png(&output)?;
    println!(
        "alpha: {} ({}x{})",
        output.display(),
        alpha.width(),
        alpha.height()
    );
    if let Some(preview) = &args.preview {
        if let Some(parent) = preview.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        render::preview(&image, &alpha)?.save_png(preview)?;
        println!("preview: {}", preview.display());
    }
    Ok(())
}

/// Rows are labelled by the stored label, falling back to the file stem.
/// When every label names an ablation variant the rows follow ablation order.
fn labelled_reports(paths: &[PathBuf]) -> Result<Vec<(String, MetricsReport)>> {
    let mut rows = Vec::with_capacity(paths.len());
    for p in paths {
        let report = MetricsReport::load(p)?;
        let label = report.label.clone().unwrap_or_else(|| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        rows.push((label, report));
    }
    let variants: Option<Vec<AblationVariant>> = rows.iter().map(|(l, _)| l.parse().ok()).collect();
    if let Some(variants) = variants {
        let mut keyed: Vec<_> = variants.into_iter().zip(rows).collect();
        keyed.sort_by_key(|(v, _)| AblationVariant::ALL.iter().position(|a| a == v));
        rows = keyed
            .into_iter()
            .map(|(v, (_, r))| (v.table_label().to_owned(), r))
            .collect();
    }
    Ok(rows)
}

pub fn report(common: &Common, args: &ReportArgs) -> Result<()> {
    validate_unused_config(common)?;
    let rows = labelled_reports(&args.reports)?;
    let refs: Vec<(&str, &MetricsReport)> = rows.iter().map(|(l, r)| (l.as_str(), r)).collect();
    let table = comparison_table(&refs);
    print!("{table}");
    if let Some(path) = &args.table {
        write_text(path, &table)?;
        println!("table: {}", path.display());
    }
    if let Some(dir) = &args.charts {
        create_dir(dir)?;
        for (metric, pick) in render::METRICS {
            let values: Vec<f64> = rows.iter().map(|(_, r)| pick(&r.means)).collect();
            let path = dir.join(format!("{metric}.png"));
            render::bar_chart(&values)?.save_png(&path)?;
            println!("chart: {}", path.display());
        }
    }
    Ok(())
}
