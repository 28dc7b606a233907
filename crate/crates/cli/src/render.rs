use msia_matte::compositor::{composite, AlphaMatte, ImageRgb};
use msia_matte::metrics::MetricMeans;
use msia_matte::Result;

type Metric = (&'static str, fn(&MetricMeans) -> f64);

pub const METRICS: [Metric; 4] = [
    ("sad", |m| m.sad),
    ("mse", |m| m.mse),
    ("gradient", |m| m.gradient),
    ("connectivity", |m| m.connectivity),
];

const PALETTE: [[f32; 3]; 6] = [
    [0.26, 0.45, 0.70],
    [0.87, 0.52, 0.20],
    [0.33, 0.63, 0.33],
    [0.77, 0.28, 0.29],
    [0.55, 0.43, 0.71],
    [0.55, 0.55, 0.55],
];

const CHECKER: usize = 8;

/// Input, alpha and the input over a checkerboard, left to right.
pub fn preview(image: &ImageRgb, alpha: &AlphaMatte) -> Result<ImageRgb> {
    let (w, h) = image.dims();
    let board = ImageRgb::from_fn(w, h, |x, y| {
        let v = if (x / CHECKER + y / CHECKER).is_multiple_of(2) {
            0.8
        } else {
            0.55
        };
        [v; 3]
    })?;
    let over = composite(image, &board, alpha)?;
    ImageRgb::from_fn(3 * w, h, |x, y| match x / w {
        0 => image.pixel(x, y),
        1 => [alpha.get(x - w, y) as f32; 3],
        _ => over.pixel(x - 2 * w, y),
    })
}

/// One bar per value on a white canvas, scaled to the largest value.
pub fn bar_chart(values: &[f64]) -> Result<ImageRgb> {
    const BAR: usize = 48;
    const GAP: usize = 16;
    const HEIGHT: usize = 200;
    const MARGIN: usize = 10;
    let width = values.len() * (BAR + GAP) + GAP;
    let top = values.iter().cloned().fold(0.0, f64::max);
    let heights: Vec<usize> = values
        .iter()
        .map(|&v| {
            if top > 0.0 {
                ((v / top) * (HEIGHT - 2 * MARGIN) as f64).round() as usize
            } else {
                0
            }
        })
        .collect();
    ImageRgb::from_fn(width, HEIGHT, |x, y| {
        let baseline = HEIGHT - MARGIN;
        if y == baseline {
            return [0.0; 3];
        }
        let slot = x.saturating_sub(GAP) / (BAR + GAP);
        let within = x >= GAP && (x - GAP) % (BAR + GAP) < BAR;
        if within && slot < values.len() && y < baseline && y >= baseline - heights[slot] {
            PALETTE[slot % PALETTE.len()]
        } else {
            [1.0; 3]
        }
    })
}
