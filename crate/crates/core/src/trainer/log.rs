use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{MattingError, Result};

/// One optimizer step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub epoch: usize,
    pub lr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub l1: f64,
    pub ssim: f64,
    pub total: f64,
}

/// End-of-epoch summary; metric columns are empty without an eval set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_total: f64,
    pub sad: Option<f64>,
    pub mse: Option<f64>,
    pub gradient: Option<f64>,
    pub connectivity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub epochs: Vec<EpochRecord>,
}

pub const ITERATION_LOG: &str = "train_log.csv";
pub const EPOCH_LOG: &str = "epoch_log.csv";

fn to_csv<T: Serialize>(rows: &[T], header: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(header).expect("in-memory write");
    }
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("csv is utf-8")
}

impl TrainLog {
    pub fn iterations_csv(&self) -> String {
        to_csv(
            &self.iterations,
            &[
                "iter", "epoch", "lr", "lambda1", "lambda2", "l1", "ssim", "total",
            ],
        )
    }

    pub fn epochs_csv(&self) -> String {
        to_csv(
            &self.epochs,
            &[
                "epoch",
                "mean_total",
                "sad",
                "mse",
                "gradient",
                "connectivity",
            ],
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, body) in [
            (ITERATION_LOG, self.iterations_csv()),
            (EPOCH_LOG, self.epochs_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(MattingError::io(&p))?;
        }
        Ok(())
    }

    pub fn load_iterations(path: &Path) -> Result<Vec<IterationRecord>> {
        let mut r = csv::Reader::from_path(path).map_err(|e| MattingError::Format {
            what: "training log",
            path: path.to_owned(),
            detail: e.to_string(),
        })?;
        r.deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| MattingError::Format {
                what: "training log",
                path: path.to_owned(),
                detail: e.to_string(),
            })
    }
}
