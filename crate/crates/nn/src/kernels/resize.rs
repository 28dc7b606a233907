//! Bilinear resampling with half-pixel centers (align-corners disabled).

use crate::tensor::{Shape, Tensor};

#[derive(Clone, Debug)]
struct Taps {
    lo: Vec<usize>,
    hi: Vec<usize>,
    frac: Vec<f32>,
}

fn taps(input: usize, output: usize) -> Taps {
    let scale = input as f64 / output as f64;
    let mut t = Taps {
        lo: Vec::with_capacity(output),
        hi: Vec::with_capacity(output),
        frac: Vec::with_capacity(output),
    };
    for o in 0..output {
        let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
        let lo = (src.floor() as usize).min(input - 1);
        let hi = (lo + 1).min(input - 1);
        t.lo.push(lo);
        t.hi.push(hi);
        t.frac.push((src - lo as f64) as f32);
    }
    t
}

pub fn bilinear_forward(x: &Tensor, out_h: usize, out_w: usize) -> Tensor {
    let s = x.shape();
    let ty = taps(s.h, out_h);
    let tx = taps(s.w, out_w);
    let mut out = Tensor::zeros(Shape::new(s.n, s.c, out_h, out_w));
    for n in 0..s.n {
        for c in 0..s.c {
            let src = x.plane(n, c);
            let dst = out.plane_mut(n, c);
            for oy in 0..out_h {
                let (r0, r1, ly) = (ty.lo[oy] * s.w, ty.hi[oy] * s.w, ty.frac[oy]);
                for ox in 0..out_w {
                    let (c0, c1, lx) = (tx.lo[ox], tx.hi[ox], tx.frac[ox]);
                    let top = (1.0 - lx) * src[r0 + c0] + lx * src[r0 + c1];
                    let bottom = (1.0 - lx) * src[r1 + c0] + lx * src[r1 + c1];
                    dst[oy * out_w + ox] = (1.0 - ly) * top + ly * bottom;
                }
            }
        }
    }
    out
}

pub fn bilinear_backward(dy: &Tensor, input: Shape) -> Tensor {
    let s = dy.shape();
    let ty = taps(input.h, s.h);
    let tx = taps(input.w, s.w);
    let mut dx = Tensor::zeros(input);
    for n in 0..s.n {
        for c in 0..s.c {
            let g = dy.plane(n, c);
            let dst = dx.plane_mut(n, c);
            for oy in 0..s.h {
                let (r0, r1, ly) = (ty.lo[oy] * input.w, ty.hi[oy] * input.w, ty.frac[oy]);
                for ox in 0..s.w {
                    let (c0, c1, lx) = (tx.lo[ox], tx.hi[ox], tx.frac[ox]);
                    let v = g[oy * s.w + ox];
                    dst[r0 + c0] += (1.0 - ly) * (1.0 - lx) * v;
                    dst[r0 + c1] += (1.0 - ly) * lx * v;
                    dst[r1 + c0] += ly * (1.0 - lx) * v;
                    dst[r1 + c1] += ly * lx * v;
                }
            }
        }
    }
    dx
}
