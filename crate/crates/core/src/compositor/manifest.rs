use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};

use super::{load_pair, AlphaMatte, ImageRgb};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = MattingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(MattingError::InvalidArgument(format!(
                "unknown split `{other}` (expected train or test)"
            ))),
        }
    }
}

/// One JSON-lines row. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub composite: String,
    pub alpha: String,
    pub fg_id: String,
    pub bg_id: String,
    pub seed: u64,
    pub split: Split,
}

impl ManifestRecord {
    /// Stable identifier used to name per-record outputs (predictions).
    pub fn key(&self) -> String {
        Path::new(&self.composite)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.composite.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    root: PathBuf,
    pub records: Vec<ManifestRecord>,
}

impl DatasetManifest {
    pub fn new(root: impl Into<PathBuf>, records: Vec<ManifestRecord>) -> Self {
        Self {
            root: root.into(),
            records,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.root.join(relative)
    }

    pub fn load_record(&self, record: &ManifestRecord) -> Result<(ImageRgb, AlphaMatte)> {
        load_pair(
            &self.resolve(&record.composite),
            &self.resolve(&record.alpha),
        )
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Reads a JSON-lines manifest; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(MattingError::io(path))?;
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = serde_json::from_str(line).map_err(|e| MattingError::Format {
                what: "manifest",
                path: path.to_owned(),
                detail: format!("line {}: {e}", i + 1),
            })?;
            records.push(record);
        }
        let root = path.parent().map(Path::to_owned).unwrap_or_default();
        Ok(Self { root, records })
    }

    /// Writes through a temporary file and a rename so readers never observe a
    /// partial manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut f = fs::File::create(&tmp).map_err(MattingError::io(&tmp))?;
            f.write_all(self.to_jsonl().as_bytes())
                .map_err(MattingError::io(&tmp))?;
            f.sync_all().map_err(MattingError::io(&tmp))?;
        }
        fs::rename(&tmp, path).map_err(MattingError::io(path))
    }

    pub fn per_foreground_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.fg_id.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Checks the multiplicity invariant and that every referenced pair decodes
    /// with matching dimensions.
    pub fn validate(&self, per_fg: Option<usize>) -> Result<()> {
        if let Some(k) = per_fg {
            for (fg, &n) in &self.per_foreground_counts() {
                if n != k {
                    return Err(MattingError::InvalidArgument(format!(
                        "foreground `{fg}` has {n} composites, expected {k}"
                    )));
                }
            }
        }
        for r in &self.records {
            self.load_record(r)?;
        }
        Ok(())
    }
}
