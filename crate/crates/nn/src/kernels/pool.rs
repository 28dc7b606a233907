use crate::tensor::{Shape, Tensor};

/// Max pooling; returns the output and, per output element, the flat index of
/// the winning input element within its plane.
pub fn max_pool_forward(
    x: &Tensor,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> (Tensor, Vec<u32>) {
    let s = x.shape();
    let oh = (s.h + 2 * padding - kernel) / stride + 1;
    let ow = (s.w + 2 * padding - kernel) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, oh, ow));
    let mut argmax = vec![0u32; out.numel()];
    let mut k = 0;
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut at = 0usize;
                    for ky in 0..kernel {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= s.h as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= s.w as isize {
                                continue;
                            }
                            let idx = iy as usize * s.w + ix as usize;
                            if src[idx] > best {
                                best = src[idx];
                                at = idx;
                            }
                        }
                    }
                    dst[oy * ow + ox] = best;
                    argmax[k] = at as u32;
                    k += 1;
                }
            }
        }
    }
    (out, argmax)
}

pub fn max_pool_backward(dy: &Tensor, argmax: &[u32], input: Shape) -> Tensor {
    let mut dx = Tensor::zeros(input);
    let plane = dy.shape().plane();
    for n in 0..input.n {
        for c in 0..input.c {
            let g = dy.plane(n, c);
            let base = (n * input.c + c) * plane;
            let dst = dx.plane_mut(n, c);
            for (i, &v) in g.iter().enumerate() {
                dst[argmax[base + i] as usize] += v;
            }
        }
    }
    dx
}

pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
    let inv = 1.0 / s.plane() as f64;
    for n in 0..s.n {
        for c in 0..s.c {
            let mean = x.plane(n, c).iter().map(|&v| v as f64).sum::<f64>() * inv;
            out.plane_mut(n, c)[0] = mean as f32;
        }
    }
    out
}

/// Spreads each `[n, c, 1, 1]` value over an `h×w` plane.
pub fn broadcast_planes(x: &Tensor, h: usize, w: usize) -> Tensor {
    let s = x.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, h, w));
    for n in 0..s.n {
        for c in 0..s.c {
            let v = x.plane(n, c)[0];
            out.plane_mut(n, c).fill(v);
        }
    }
    out
}

/// Adjoint of [`broadcast_planes`]: sums each plane.
pub fn sum_planes(dy: &Tensor) -> Tensor {
    let s = dy.shape();
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, 1, 1));
    for n in 0..s.n {
        for c in 0..s.c {
            out.plane_mut(n, c)[0] = dy.plane(n, c).iter().sum();
        }
    }
    out
}
