//! SAD, MSE, Gradient and Connectivity errors over full alpha mattes, plus
//! dataset-level reports.

mod connectivity;
mod gradient;
mod report;

pub use connectivity::{CONNECTIVITY_LEVELS, CONNECTIVITY_STEP, CONNECTIVITY_THETA};
pub use gradient::{derivative_factors, filter_half_size, GRADIENT_SIGMA};
pub use report::{
    comparison_table, evaluate, evaluate_with, header_differences, ImageMetrics, MetricMeans,
    MetricsReport, ReportHeader,
};

use crate::compositor::AlphaMatte;
use crate::error::{MattingError, Result};

/// Divisor applied to SAD, Gradient and Connectivity sums.
pub const KILO: f64 = 1000.0;

fn check_dims(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(MattingError::shape(
            "metric operands",
            format!("{:?}", gt.dims()),
            format!("{:?}", pred.dims()),
        ));
    }
    Ok(())
}

pub fn sad(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt)?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(s / KILO)
}

pub fn mse(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt)?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| (p - g) * (p - g))
        .sum();
    Ok(s / pred.len() as f64)
}

/// Squared difference of Gaussian-derivative gradients (σ = 1.4), summed and
/// divided by 1000. Both sides must exceed the filter half-size.
pub fn gradient_error(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt)?;
    gradient::gradient_error(pred, gt)
}

pub fn connectivity_error(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    check_dims(pred, gt)?;
    Ok(connectivity::connectivity_error(pred, gt))
}

pub fn image_metrics(key: &str, pred: &AlphaMatte, gt: &AlphaMatte) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        key: key.to_owned(),
        sad: sad(pred, gt)?,
        mse: mse(pred, gt)?,
        gradient: gradient_error(pred, gt)?,
        connectivity: connectivity_error(pred, gt)?,
    })
}
