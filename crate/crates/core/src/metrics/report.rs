use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::compositor::{AlphaMatte, DatasetManifest, ManifestRecord};
use crate::error::{MattingError, Result};

use super::{image_metrics, CONNECTIVITY_STEP, CONNECTIVITY_THETA, GRADIENT_SIGMA, KILO};

/// Metric definitions and scaling constants, stored with every report so
/// that reports produced under different conventions are never mixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportHeader {
    pub region: String,
    pub sad: String,
    pub mse: String,
    pub gradient: String,
    pub connectivity: String,
    pub sad_divisor: f64,
    pub gradient_divisor: f64,
    pub connectivity_divisor: f64,
    pub gradient_sigma: f64,
    pub connectivity_theta: f64,
    pub connectivity_step: f64,
    pub connectivity_neighborhood: u32,
}

impl Default for ReportHeader {
    fn default() -> Self {
        Self {
            region: "full image".into(),
            sad: "sum |pred - gt| / sad_divisor".into(),
            mse: "mean (pred - gt)^2".into(),
            gradient:
                "sum ||grad pred - grad gt||^2 / gradient_divisor, Gaussian-derivative filters"
                    .into(),
            connectivity: "sum |phi(pred) - phi(gt)| / connectivity_divisor".into(),
            sad_divisor: KILO,
            gradient_divisor: KILO,
            connectivity_divisor: KILO,
            gradient_sigma: GRADIENT_SIGMA,
            connectivity_theta: CONNECTIVITY_THETA,
            connectivity_step: CONNECTIVITY_STEP,
            connectivity_neighborhood: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub key: String,
    pub sad: f64,
    pub mse: f64,
    pub gradient: f64,
    pub connectivity: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricMeans {
    pub sad: f64,
    pub mse: f64,
    pub gradient: f64,
    pub connectivity: f64,
}

impl MetricMeans {
    fn of(rows: &[ImageMetrics]) -> Self {
        let n = rows.len() as f64;
        let mean = |f: fn(&ImageMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        Self {
            sad: mean(|r| r.sad),
            mse: mean(|r| r.mse),
            gradient: mean(|r| r.gradient),
            connectivity: mean(|r| r.connectivity),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub header: ReportHeader,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub images: Vec<ImageMetrics>,
    /// Records without a prediction; these never enter the means.
    pub missing: Vec<String>,
    pub means: MetricMeans,
}

impl MetricsReport {
    pub fn from_rows(images: Vec<ImageMetrics>, missing: Vec<String>) -> Result<Self> {
        if images.is_empty() {
            return Err(MattingError::InvalidArgument(
                "no predictions to evaluate".into(),
            ));
        }
        Ok(Self {
            header: ReportHeader::default(),
            label: None,
            means: MetricMeans::of(&images),
            images,
            missing,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(MattingError::io(path))
    }

    /// Loads a report, rejecting headers that differ from the current
    /// conventions with the names of the differing keys.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(MattingError::io(path))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| MattingError::Format {
                what: "metrics report",
                path: path.to_owned(),
                detail: e.to_string(),
            })?;
        let header = value.get("header").cloned().unwrap_or_default();
        let expected = serde_json::to_value(ReportHeader::default()).expect("header serializes");
        let diff = header_differences(&expected, &header);
        if !diff.is_empty() {
            return Err(MattingError::Format {
                what: "metrics report",
                path: path.to_owned(),
                detail: format!("header differs in: {}", diff.join(", ")),
            });
        }
        serde_json::from_value(value).map_err(|e| MattingError::Format {
            what: "metrics report",
            path: path.to_owned(),
            detail: e.to_string(),
        })
    }
}

/// Fixed-width text table with one row per report and the four metric
/// columns.
pub fn comparison_table(rows: &[(&str, &MetricsReport)]) -> String {
    let width = rows
        .iter()
        .map(|(l, _)| l.chars().count())
        .chain(std::iter::once("Method".len()))
        .max()
        .unwrap_or(6);
    let mut out = format!(
        "{:<width$}  {:>9}  {:>8}  {:>9}  {:>12}\n",
        "Method", "SAD", "MSE", "Gradient", "Connectivity"
    );
    for (label, r) in rows {
        let m = &r.means;
        out.push_str(&format!(
            "{label:<width$}  {:>9.3}  {:>8.5}  {:>9.3}  {:>12.3}\n",
            m.sad, m.mse, m.gradient, m.connectivity
        ));
    }
    out
}

/// Keys whose values differ (or exist on only one side) between two headers.
pub fn header_differences(a: &serde_json::Value, b: &serde_json::Value) -> Vec<String> {
    let empty = serde_json::Map::new();
    let (a, b) = (
        a.as_object().unwrap_or(&empty),
        b.as_object().unwrap_or(&empty),
    );
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .cloned()
        .collect()
}

/// Scores predictions produced by `predict` against each record's alpha.
/// `Ok(None)` marks a missing prediction, which is an error unless
/// `exclude_missing` is set.
pub fn evaluate_with(
    manifest: &DatasetManifest,
    exclude_missing: bool,
    mut predict: impl FnMut(&ManifestRecord) -> Result<Option<AlphaMatte>>,
) -> Result<MetricsReport> {
    let mut rows = Vec::with_capacity(manifest.len());
    let mut missing = Vec::new();
    for record in &manifest.records {
        let key = record.key();
        match predict(record)? {
            Some(pred) => {
                let gt = AlphaMatte::load(&manifest.resolve(&record.alpha))?;
                rows.push(image_metrics(&key, &pred, &gt)?);
            }
            None => missing.push(key),
        }
    }
    if !missing.is_empty() && !exclude_missing {
        return Err(MattingError::InvalidArgument(format!(
            "missing predictions for {} record(s): {}",
            missing.len(),
            missing.join(", ")
        )));
    }
    MetricsReport::from_rows(rows, missing)
}

/// Evaluates `{predictions}/{key}.png` for every manifest record.
pub fn evaluate(
    manifest: &DatasetManifest,
    predictions: &Path,
    exclude_missing: bool,
) -> Result<MetricsReport> {
    evaluate_with(manifest, exclude_missing, |record| {
        let path = predictions.join(format!("{}.png", record.key()));
        if path.exists() {
            AlphaMatte::load(&path).map(Some)
        } else {
            Ok(None)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(key: &str, sad: f64) -> ImageMetrics {
        ImageMetrics {
            key: key.into(),
            sad,
            mse: sad / 10.0,
            gradient: 0.0,
            connectivity: sad * 2.0,
        }
    }

    #[test]
    fn means_are_arithmetic() {
        let r = MetricsReport::from_rows(vec![row("a", 1.0), row("b", 2.5), row("c", 4.0)], vec![])
            .unwrap();
        assert!((r.means.sad - 7.5 / 3.0).abs() < 1e-12);
        assert!((r.means.connectivity - 5.0).abs() < 1e-12);
        let single = MetricsReport::from_rows(vec![row("a", 3.0)], vec![]).unwrap();
        assert_eq!(single.means.sad, 3.0);
    }

    #[test]
    fn report_round_trips_and_flags_header_drift() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        let r = MetricsReport::from_rows(vec![row("a", 1.0)], vec!["b".into()])
            .unwrap()
            .with_label("baseline");
        r.save(&p).unwrap();
        assert_eq!(MetricsReport::load(&p).unwrap(), r);

        let mut v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        v["header"]["sad_divisor"] = 1.0.into();
        v["header"]["extra"] = "x".into();
        std::fs::write(&p, v.to_string()).unwrap();
        let err = MetricsReport::load(&p).unwrap_err().to_string();
        assert!(
            err.contains("extra") && err.contains("sad_divisor"),
            "{err}"
        );
    }
}
