//! Gradient error from first-order Gaussian-derivative filters.

use crate::compositor::AlphaMatte;
use crate::error::{MattingError, Result};

pub const GRADIENT_SIGMA: f64 = 1.4;

/// Filter half-size at which the Gaussian tail drops below 1e-2.
pub fn filter_half_size(sigma: f64) -> usize {
    let epsilon = 1e-2;
    let h = sigma * (-2.0 * ((2.0 * std::f64::consts::PI).sqrt() * sigma * epsilon).ln()).sqrt();
    h.ceil() as usize
}

fn gauss(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn dgauss(x: f64, sigma: f64) -> f64 {
    -x * gauss(x, sigma) / (sigma * sigma)
}

/// The smoothing and derivative factors of the separable x-derivative
/// kernel, each scaled to unit L2 norm so that their outer product does too.
pub fn derivative_factors(sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let half = filter_half_size(sigma) as isize;
    let unit = |v: Vec<f64>| {
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<_>>()
    };
    let smooth = unit((-half..=half).map(|u| gauss(u as f64, sigma)).collect());
    let deriv = unit((-half..=half).map(|u| dgauss(u as f64, sigma)).collect());
    (smooth, deriv)
}

/// True 1-D convolution along rows (`horizontal`) or columns with
/// edge-replicating borders.
fn convolve_1d(src: &[f64], w: usize, h: usize, k: &[f64], horizontal: bool) -> Vec<f64> {
    let c = (k.len() / 2) as isize;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let off = c - i as isize;
                let (sx, sy) = if horizontal {
                    ((x as isize + off).clamp(0, w as isize - 1) as usize, y)
                } else {
                    (x, (y as isize + off).clamp(0, h as isize - 1) as usize)
                };
                acc += kv * src[sy * w + sx];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

pub(crate) fn gradient_error(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<f64> {
    let (w, h) = pred.dims();
    let half = filter_half_size(GRADIENT_SIGMA);
    if w.min(h) <= half {
        return Err(MattingError::shape(
            "gradient filter support",
            format!("both sides larger than {half}"),
            format!("{w}x{h}"),
        ));
    }
    // The filters are linear, so the gradient of the difference suffices.
    let diff: Vec<f64> = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| p - g)
        .collect();
    let (smooth, deriv) = derivative_factors(GRADIENT_SIGMA);
    let gx = convolve_1d(
        &convolve_1d(&diff, w, h, &deriv, true),
        w,
        h,
        &smooth,
        false,
    );
    let gy = convolve_1d(
        &convolve_1d(&diff, w, h, &smooth, true),
        w,
        h,
        &deriv,
        false,
    );
    let total: f64 = gx.iter().zip(&gy).map(|(a, b)| a * a + b * b).sum();
    Ok(total / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_filter_is_nine_taps_and_antisymmetric() {
        assert_eq!(filter_half_size(GRADIENT_SIGMA), 4);
        let (s, d) = derivative_factors(GRADIENT_SIGMA);
        assert_eq!(s.len(), 9);
        for i in 0..9 {
            assert!((d[i] + d[8 - i]).abs() < 1e-15);
            assert!((s[i] - s[8 - i]).abs() < 1e-15);
        }
        assert!(d[0] > 0.0, "derivative taps run from positive to negative");
    }

    #[test]
    fn linear_ramp_has_uniform_interior_gradient() {
        let ramp = AlphaMatte::from_fn(20, 20, |x, _| x as f64 / 19.0).unwrap();
        let flat = AlphaMatte::filled(20, 20, 0.5).unwrap();
        let e = gradient_error(&ramp, &flat).unwrap();
        assert!(e > 0.0);
        let half = AlphaMatte::from_fn(20, 20, |x, _| x as f64 / 38.0).unwrap();
        let e2 = gradient_error(&half, &flat).unwrap();
        assert!((e - 4.0 * e2).abs() < 1e-12, "quadratic in the difference");
    }
}
