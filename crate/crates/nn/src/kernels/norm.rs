//! Per-channel batch normalization over (N, H, W).

use crate::tensor::Tensor;

pub struct BatchNormOutput {
    pub output: Tensor,
    /// Normalized input, kept for the backward pass.
    pub normalized: Tensor,
    pub inv_std: Vec<f32>,
    /// Batch mean and unbiased variance, present when batch statistics were used.
    pub batch_stats: Option<(Vec<f32>, Vec<f32>)>,
}

/// When `running` is `None` the batch statistics normalize the input.
pub fn batch_norm_forward(
    x: &Tensor,
    gamma: &[f32],
    beta: &[f32],
    running: Option<(&[f32], &[f32])>,
    eps: f32,
) -> BatchNormOutput {
    let s = x.shape();
    let count = (s.n * s.plane()) as f64;
    let mut means = vec![0f32; s.c];
    let mut vars = vec![0f32; s.c];
    let mut unbiased = vec![0f32; s.c];
    match running {
        Some((rm, rv)) => {
            means.copy_from_slice(rm);
            vars.copy_from_slice(rv);
        }
        None => {
            for c in 0..s.c {
                let mut sum = 0f64;
                for n in 0..s.n {
                    sum += x.plane(n, c).iter().map(|&v| v as f64).sum::<f64>();
                }
                let mean = sum / count;
                let mut sq = 0f64;
                for n in 0..s.n {
                    sq += x
                        .plane(n, c)
                        .iter()
                        .map(|&v| {
                            let d = v as f64 - mean;
                            d * d
                        })
                        .sum::<f64>();
                }
                means[c] = mean as f32;
                vars[c] = (sq / count) as f32;
                unbiased[c] = if count > 1.0 {
                    (sq / (count - 1.0)) as f32
                } else {
                    0.0
                };
            }
        }
    }
    let inv_std: Vec<f32> = vars.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
    let mut normalized = Tensor::zeros(s);
    let mut output = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let (m, is, g, b) = (means[c], inv_std[c], gamma[c], beta[c]);
            let src = x.plane(n, c);
            let xh = normalized.plane_mut(n, c);
            let out = output.plane_mut(n, c);
            for ((o, d), &v) in out.iter_mut().zip(xh.iter_mut()).zip(src) {
                *d = (v - m) * is;
                *o = *d * g + b;
            }
        }
    }
    BatchNormOutput {
        output,
        normalized,
        inv_std,
        batch_stats: running.is_none().then_some((means, unbiased)),
    }
}

pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
}

pub fn batch_norm_backward(
    dy: &Tensor,
    normalized: &Tensor,
    inv_std: &[f32],
    gamma: &[f32],
    used_batch_stats: bool,
) -> BatchNormGrads {
    let s = dy.shape();
    let count = (s.n * s.plane()) as f64;
    let mut dgamma = vec![0f32; s.c];
    let mut dbeta = vec![0f32; s.c];
    let mut sum_dy = vec![0f64; s.c];
    let mut sum_dy_xh = vec![0f64; s.c];
    for c in 0..s.c {
        for n in 0..s.n {
            for (&g, &xh) in dy.plane(n, c).iter().zip(normalized.plane(n, c)) {
                sum_dy[c] += g as f64;
                sum_dy_xh[c] += (g as f64) * (xh as f64);
            }
        }
        dgamma[c] = sum_dy_xh[c] as f32;
        dbeta[c] = sum_dy[c] as f32;
    }
    let mut dx = Tensor::zeros(s);
    for n in 0..s.n {
        for c in 0..s.c {
            let scale = gamma[c] * inv_std[c];
            let g = dy.plane(n, c);
            let xh = normalized.plane(n, c);
            let dst = dx.plane_mut(n, c);
            if used_batch_stats {
                let mdy = (sum_dy[c] / count) as f32;
                let mdyx = (sum_dy_xh[c] / count) as f32;
                for i in 0..dst.len() {
                    dst[i] = scale * (g[i] - mdy - xh[i] * mdyx);
                }
            } else {
                for i in 0..dst.len() {
                    dst[i] = scale * g[i];
                }
            }
        }
    }
    BatchNormGrads {
        input: dx,
        gamma: dgamma,
        beta: dbeta,
    }
}
