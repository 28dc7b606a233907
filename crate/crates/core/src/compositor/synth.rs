//! Composite-dataset synthesis: every foreground is blended over `per_fg`
//! randomly drawn backgrounds, each fitted to the foreground's size.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::{self, FilterType};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{MattingError, Result};

use super::{
    composite, AlphaMatte, BackgroundLayer, DatasetManifest, ForegroundLayer, ImageRgb,
    ManifestRecord, Split,
};

#[derive(Clone, Debug)]
pub struct ForegroundAsset {
    pub id: String,
    pub foreground: ForegroundLayer,
    pub alpha: AlphaMatte,
}

#[derive(Clone, Debug)]
pub struct BackgroundAsset {
    pub id: String,
    pub image: BackgroundLayer,
}

/// Background draw for one composite, fixed before any pixel work happens.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlannedRecord {
    pub fg_index: usize,
    pub k: usize,
    pub bg_index: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssetFailure {
    pub asset: String,
    pub record: Option<String>,
    pub error: String,
}

#[derive(Debug)]
pub struct SynthOutcome {
    /// Present only when every record was produced.
    pub manifest: Option<DatasetManifest>,
    pub manifest_path: PathBuf,
    pub failures: Vec<AssetFailure>,
}

/// Deterministic draw plan: one seed per record from a master stream, and the
/// background index from that record's own stream.
pub fn plan_split(
    fg_count: usize,
    bg_count: usize,
    per_fg: usize,
    seed: u64,
) -> Result<Vec<PlannedRecord>> {
    if per_fg == 0 {
        return Err(MattingError::InvalidArgument(
            "per_fg must be at least 1".into(),
        ));
    }
    if bg_count == 0 {
        return Err(MattingError::InvalidArgument(
            "background pool is empty".into(),
        ));
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = Vec::with_capacity(fg_count * per_fg);
    for fg_index in 0..fg_count {
        for k in 0..per_fg {
            let record_seed = master.next_u64();
            let bg_index = ChaCha8Rng::seed_from_u64(record_seed).random_range(0..bg_count);
            plan.push(PlannedRecord {
                fg_index,
                k,
                bg_index,
                seed: record_seed,
            });
        }
    }
    Ok(plan)
}

/// Scales `bg` (aspect preserved) until it covers `width×height`, then
/// center-crops to exactly that size.
pub fn fit_background(bg: &BackgroundLayer, width: usize, height: usize) -> Result<ImageRgb> {
    if bg.dims() == (width, height) {
        return Ok(bg.clone());
    }
    let scale = (width as f64 / bg.width() as f64).max(height as f64 / bg.height() as f64);
    let nw = ((bg.width() as f64 * scale).ceil() as usize).max(width);
    let nh = ((bg.height() as f64 * scale).ceil() as usize).max(height);
    let resized = imageops::resize(&bg.to_rgb32f(), nw as u32, nh as u32, FilterType::Triangle);
    let resized = ImageRgb::from_rgb32f(resized);
    resized.crop((nw - width) / 2, (nh - height) / 2, width, height)
}

struct SplitLayout {
    root: PathBuf,
    split: Split,
}

impl SplitLayout {
    fn prepare(out_dir: &Path, split: Split) -> Result<Self> {
        for sub in ["composite", "alpha"] {
            let d = out_dir.join(split.to_string()).join(sub);
            fs::create_dir_all(&d).map_err(MattingError::io(&d))?;
        }
        Ok(Self {
            root: out_dir.to_owned(),
            split,
        })
    }

    fn composite_rel(&self, fg_id: &str, k: usize) -> String {
        format!("{}/composite/{fg_id}_{k:03}.png", self.split)
    }

    fn alpha_rel(&self, fg_id: &str) -> String {
        format!("{}/alpha/{fg_id}.png", self.split)
    }

    fn manifest_path(&self) -> PathBuf {
        self.root.join(format!("{}.jsonl", self.split))
    }
}

#[allow(clippy::too_many_arguments)]
fn write_split(
    fg_ids: &[String],
    mut load_fg: impl FnMut(usize) -> Result<ForegroundAsset>,
    bg_ids: &[String],
    mut load_bg: impl FnMut(usize) -> Result<BackgroundLayer>,
    per_fg: usize,
    seed: u64,
    split: Split,
    out_dir: &Path,
) -> Result<SynthOutcome> {
    let plan = plan_split(fg_ids.len(), bg_ids.len(), per_fg, seed)?;
    let layout = SplitLayout::prepare(out_dir, split)?;
    let mut records = Vec::with_capacity(plan.len());
    let mut failures = Vec::new();
    for (fg_index, group) in plan.chunks(per_fg).enumerate() {
        let fg_id = &fg_ids[fg_index];
        let asset = match load_fg(fg_index) {
            Ok(a) => a,
            Err(e) => {
                failures.push(AssetFailure {
                    asset: fg_id.clone(),
                    record: None,
                    error: e.to_string(),
                });
                continue;
            }
        };
        let alpha_rel = layout.alpha_rel(fg_id);
        if let Err(e) = asset.alpha.save_png(&layout.root.join(&alpha_rel)) {
            failures.push(AssetFailure {
                asset: fg_id.clone(),
                record: None,
                error: e.to_string(),
            });
            continue;
        }
        for planned in group {
            let composite_rel = layout.composite_rel(fg_id, planned.k);
            let bg_id = &bg_ids[planned.bg_index];
            let produced = load_bg(planned.bg_index)
                .and_then(|bg| {
                    fit_background(&bg, asset.foreground.width(), asset.foreground.height())
                })
                .and_then(|bg| composite(&asset.foreground, &bg, &asset.alpha))
                .and_then(|img| img.save_png(&layout.root.join(&composite_rel)));
            match produced {
                Ok(()) => records.push(ManifestRecord {
                    composite: composite_rel,
                    alpha: alpha_rel.clone(),
                    fg_id: fg_id.clone(),
                    bg_id: bg_id.clone(),
                    seed: planned.seed,
                    split,
                }),
                Err(e) => failures.push(AssetFailure {
                    asset: bg_id.clone(),
                    record: Some(composite_rel),
                    error: e.to_string(),
                }),
            }
        }
    }
    let manifest_path = layout.manifest_path();
    let manifest = if failures.is_empty() {
        let m = DatasetManifest::new(out_dir, records);
        m.save(&manifest_path)?;
        Some(m)
    } else {
        None
    };
    Ok(SynthOutcome {
        manifest,
        manifest_path,
        failures,
    })
}

/// Synthesizes a split from in-memory assets.
pub fn synthesize_split(
    foregrounds: &[ForegroundAsset],
    backgrounds: &[BackgroundAsset],
    per_fg: usize,
    seed: u64,
    split: Split,
    out_dir: &Path,
) -> Result<SynthOutcome> {
    for fg in foregrounds {
        if fg.foreground.dims() != fg.alpha.dims() {
            return Err(MattingError::shape(
                "foreground/alpha pair",
                format!("{:?}", fg.foreground.dims()),
                format!("{:?} for `{}`", fg.alpha.dims(), fg.id),
            ));
        }
    }
    let fg_ids: Vec<String> = foregrounds.iter().map(|f| f.id.clone()).collect();
    let bg_ids: Vec<String> = backgrounds.iter().map(|b| b.id.clone()).collect();
    write_split(
        &fg_ids,
        |i| Ok(foregrounds[i].clone()),
        &bg_ids,
        |j| Ok(backgrounds[j].image.clone()),
        per_fg,
        seed,
        split,
        out_dir,
    )
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(MattingError::io(dir))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(MattingError::io(dir))?.path();
        let is_image = path
            .extension()
            .and_then(|x| x.to_str())
            .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"));
        if path.is_file() && is_image {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Synthesizes a split from asset directories. Foregrounds and alphas are
/// paired by file stem; backgrounds are read lazily per draw. Missing
/// directories fail up front; unreadable files are collected as failures.
pub fn synthesize_from_dirs(
    fg_dir: &Path,
    alpha_dir: &Path,
    bg_dir: &Path,
    per_fg: usize,
    seed: u64,
    split: Split,
    out_dir: &Path,
) -> Result<SynthOutcome> {
    let fg_files = list_images(fg_dir)?;
    let alpha_files = list_images(alpha_dir)?;
    let bg_files = list_images(bg_dir)?;
    if fg_files.is_empty() {
        return Err(MattingError::InvalidArgument(format!(
            "no foreground images in {}",
            fg_dir.display()
        )));
    }
    if bg_files.is_empty() {
        return Err(MattingError::InvalidArgument(format!(
            "no background images in {}",
            bg_dir.display()
        )));
    }
    let fg_ids: Vec<String> = fg_files.iter().map(|p| stem(p)).collect();
    let bg_ids: Vec<String> = bg_files.iter().map(|p| stem(p)).collect();
    write_split(
        &fg_ids,
        |i| {
            let alpha_path = alpha_files
                .iter()
                .find(|p| stem(p) == fg_ids[i])
                .ok_or_else(|| {
                    MattingError::InvalidArgument(format!("no alpha matte for `{}`", fg_ids[i]))
                })?;
            let (foreground, alpha) = super::load_pair(&fg_files[i], alpha_path)?;
            Ok(ForegroundAsset {
                id: fg_ids[i].clone(),
                foreground,
                alpha,
            })
        },
        &bg_ids,
        |j| ImageRgb::load(&bg_files[j]),
        per_fg,
        seed,
        split,
        out_dir,
    )
}
