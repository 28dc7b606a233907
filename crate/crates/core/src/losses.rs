//! Blended matting objective `λ1·L1 + λ2·L_SSIM`, with analytic gradients
//! with respect to the predicted matte.

use crate::compositor::AlphaMatte;
use crate::error::{MattingError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

/// `(1, 0.1)` for the first epoch, `(1, 0.025)` afterwards. Epochs are 1-based.
pub fn lambda_schedule(epoch: usize) -> Result<LossWeights> {
    match epoch {
        0 => Err(MattingError::InvalidArgument(
            "epochs are numbered from 1".into(),
        )),
        1 => Ok(LossWeights {
            lambda1: 1.0,
            lambda2: 0.1,
        }),
        _ => Ok(LossWeights {
            lambda1: 1.0,
            lambda2: 0.025,
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SsimMode {
    /// Gaussian-windowed statistics averaged over all valid window positions.
    Windowed,
    /// A single window spanning the image with uniform weights.
    Global,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub dynamic_range: f64,
    pub mode: SsimMode,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            sigma: 1.5,
            dynamic_range: 1.0,
            mode: SsimMode::Windowed,
        }
    }
}

impl SsimParams {
    pub fn global() -> Self {
        Self {
            mode: SsimMode::Global,
            ..Self::default()
        }
    }

    pub fn c1(&self) -> f64 {
        (0.01 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (0.03 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian; the 2-D window is its outer product.
    pub fn gaussian_1d(&self) -> Vec<f64> {
        let half = (self.window_size / 2) as f64;
        let raw: Vec<f64> = (0..self.window_size)
            .map(|i| (-(i as f64 - half).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum L1Reduction {
    /// Per-pixel mean; keeps the learning rate independent of crop size.
    #[default]
    Mean,
    /// Raw sum over the pixel set.
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L1Loss {
    pub sum: f64,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerms {
    /// The L1 term under the requested reduction.
    pub l1: f64,
    pub ssim: f64,
    pub total: f64,
}

fn same_dims(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<()> {
    if pred.dims() != gt.dims() {
        return Err(MattingError::shape(
            "loss operands",
            format!("{:?}", gt.dims()),
            format!("{:?}", pred.dims()),
        ));
    }
    Ok(())
}

pub fn l1_loss(pred: &AlphaMatte, gt: &AlphaMatte) -> Result<L1Loss> {
    same_dims(pred, gt)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| (p - g).abs())
        .sum();
    Ok(L1Loss {
        sum,
        mean: sum / pred.len() as f64,
    })
}

/// Subgradient of the reduced L1 term; `sign(0) = 0`.
fn l1_grad(pred: &AlphaMatte, gt: &AlphaMatte, reduction: L1Reduction) -> Vec<f64> {
    let scale = match reduction {
        L1Reduction::Mean => 1.0 / pred.len() as f64,
        L1Reduction::Sum => 1.0,
    };
    pred.data()
        .iter()
        .zip(gt.data())
        .map(|(p, g)| {
            let d = p - g;
            if d > 0.0 {
                scale
            } else if d < 0.0 {
                -scale
            } else {
                0.0
            }
        })
        .collect()
}

/// Separable "valid" correlation of a `w×h` plane with `ky ⊗ kx`.
fn filter_valid(src: &[f64], w: usize, h: usize, ky: &[f64], kx: &[f64]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - kx.len(), h + 1 - ky.len());
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = kx.iter().zip(&line[x..]).map(|(k, v)| k * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = ky
                .iter()
                .enumerate()
                .map(|(j, k)| k * rows[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters an `ow×oh` map back onto `w×h`.
fn filter_valid_adjoint(src: &[f64], w: usize, h: usize, ky: &[f64], kx: &[f64]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - kx.len(), h + 1 - ky.len());
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = src[y * ow + x];
            for (j, k) in ky.iter().enumerate() {
                rows[(y + j) * ow + x] += k * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = rows[y * ow + x];
            for (i, k) in kx.iter().enumerate() {
                out[y * w + x + i] += k * v;
            }
        }
    }
    out
}

fn ssim_kernels(p: &SsimParams, w: usize, h: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match p.mode {
        SsimMode::Windowed => {
            if w < p.window_size || h < p.window_size {
                return Err(MattingError::shape(
                    "ssim window",
                    format!("image at least {0}x{0}", p.window_size),
                    format!("{w}x{h}"),
                ));
            }
            let g = p.gaussian_1d();
            Ok((g.clone(), g))
        }
        SsimMode::Global => Ok((vec![1.0 / h as f64; h], vec![1.0 / w as f64; w])),
    }
}

/// `1 − mean SSIM`, optionally with its gradient w.r.t. `pred`.
fn ssim_impl(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    p: &SsimParams,
    want_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    same_dims(pred, gt)?;
    let (w, h) = pred.dims();
    let (ky, kx) = ssim_kernels(p, w, h)?;
    let x = pred.data();
    let y = gt.data();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = filter_valid(x, w, h, &ky, &kx);
    let my = filter_valid(y, w, h, &ky, &kx);
    let exx = filter_valid(&xx, w, h, &ky, &kx);
    let eyy = filter_valid(&yy, w, h, &ky, &kx);
    let exy = filter_valid(&xy, w, h, &ky, &kx);
    let (c1, c2) = (p.c1(), p.c2());
    let positions = mx.len() as f64;

    let mut total = 0.0;
    let (mut da, mut db, mut dc) = if want_grad {
        (
            vec![0.0; mx.len()],
            vec![0.0; mx.len()],
            vec![0.0; mx.len()],
        )
    } else {
        (Vec::new(), Vec::new(), Vec::new())
    };
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let sxx = exx[i] - ux * ux;
        let syy = eyy[i] - uy * uy;
        let sxy = exy[i] - ux * uy;
        let a1 = 2.0 * ux * uy + c1;
        let a2 = 2.0 * sxy + c2;
        let b1 = ux * ux + uy * uy + c1;
        let b2 = sxx + syy + c2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            let d_ux = 2.0 * uy * a2 / (b1 * b2) - 2.0 * ux * s / b1;
            let d_sxx = -s / b2;
            let d_sxy = 2.0 * a1 / (b1 * b2);
            // Chain through the raw moments E[x], E[x²], E[xy].
            da[i] = d_ux - 2.0 * ux * d_sxx - uy * d_sxy;
            db[i] = d_sxx;
            dc[i] = d_sxy;
        }
    }
    let loss = 1.0 - total / positions;
    if !want_grad {
        return Ok((loss, None));
    }
    let ga = filter_valid_adjoint(&da, w, h, &ky, &kx);
    let gb = filter_valid_adjoint(&db, w, h, &ky, &kx);
    let gc = filter_valid_adjoint(&dc, w, h, &ky, &kx);
    let grad = (0..x.len())
        .map(|k| -(ga[k] + 2.0 * x[k] * gb[k] + y[k] * gc[k]) / positions)
        .collect();
    Ok((loss, Some(grad)))
}

pub fn ssim_loss(pred: &AlphaMatte, gt: &AlphaMatte, p: &SsimParams) -> Result<f64> {
    Ok(ssim_impl(pred, gt, p, false)?.0)
}

/// `λ1·mean-L1 + λ2·L_SSIM`.
pub fn total_loss(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    w: &LossWeights,
    p: &SsimParams,
) -> Result<f64> {
    Ok(blended_loss(pred, gt, w, p, L1Reduction::Mean)?.0.total)
}

/// Loss terms and the gradient of the total w.r.t. every predicted pixel.
pub fn blended_loss(
    pred: &AlphaMatte,
    gt: &AlphaMatte,
    w: &LossWeights,
    p: &SsimParams,
    reduction: L1Reduction,
) -> Result<(LossTerms, Vec<f64>)> {
    let l1 = l1_loss(pred, gt)?;
    let l1 = match reduction {
        L1Reduction::Mean => l1.mean,
        L1Reduction::Sum => l1.sum,
    };
    let (ssim, ssim_grad) = ssim_impl(pred, gt, p, true)?;
    let ssim_grad = ssim_grad.expect("gradient requested");
    let grad = l1_grad(pred, gt, reduction)
        .into_iter()
        .zip(ssim_grad)
        .map(|(a, b)| w.lambda1 * a + w.lambda2 * b)
        .collect();
    Ok((
        LossTerms {
            l1,
            ssim,
            total: w.lambda1 * l1 + w.lambda2 * ssim,
        },
        grad,
    ))
}
