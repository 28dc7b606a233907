use std::path::Path;

use crate::compositor::DatasetManifest;
use crate::error::Result;
use crate::metrics::{comparison_table, MetricsReport};
use crate::model::AblationVariant;

use super::{evaluate_model, train_on, TrainOptions, TrainingConfig, TrainingData};

#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: AblationVariant,
    pub parameters: usize,
    pub report: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    /// One row per variant in ablation order, four metric columns.
    pub fn table(&self) -> String {
        let rows: Vec<(&str, &MetricsReport)> = self
            .rows
            .iter()
            .map(|r| (r.variant.table_label(), &r.report))
            .collect();
        comparison_table(&rows)
    }
}

/// Trains and evaluates every variant under the same seed and data. Each
/// variant writes into its own subdirectory of `out_dir`.
pub fn ablation_suite(
    cfg: &TrainingConfig,
    data: &TrainingData,
    eval: &DatasetManifest,
    out_dir: Option<&Path>,
) -> Result<AblationResult> {
    let mut rows = Vec::with_capacity(AblationVariant::ALL.len());
    for variant in AblationVariant::ALL {
        let cfg = TrainingConfig {
            ablation_variant: variant,
            ..cfg.clone()
        };
        let outcome = train_on(
            &cfg,
            data,
            TrainOptions {
                out_dir: out_dir.map(|d| d.join(variant.as_str())),
                ..Default::default()
            },
        )?;
        let report = evaluate_model(&outcome.model, eval)?.with_label(variant.as_str());
        if let Some(d) = out_dir {
            report.save(&d.join(format!("{variant}.json")))?;
        }
        rows.push(AblationRow {
            variant,
            parameters: outcome.model.num_parameters(),
            report,
        });
    }
    Ok(AblationResult { rows })
}
