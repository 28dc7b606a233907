//! Grouped, strided, dilated 2-D convolution via im2col + sgemm.

use crate::error::{mismatch, NnError};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl ConvGeometry {
    /// Square kernel with "same"-style padding for odd sizes at unit dilation.
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: 1,
            padding: kernel / 2,
            dilation: 1,
            groups: 1,
        }
    }

    pub fn stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    /// Sets the dilation and rescales padding so odd kernels keep spatial size.
    pub fn dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self.padding = dilation * (self.kernel / 2);
        self
    }

    pub fn groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn weight_shape(&self) -> Shape {
        Shape::new(
            self.out_channels,
            self.in_channels / self.groups,
            self.kernel,
            self.kernel,
        )
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |detail: String| {
            Err(NnError::Geometry {
                op: "conv2d",
                detail,
            })
        };
        if self.kernel == 0 || self.stride == 0 || self.dilation == 0 || self.groups == 0 {
            return bad(format!("zero-sized parameter in {self:?}"));
        }
        if !self.in_channels.is_multiple_of(self.groups)
            || !self.out_channels.is_multiple_of(self.groups)
        {
            return bad(format!(
                "channels {}→{} not divisible by {} groups",
                self.in_channels, self.out_channels, self.groups
            ));
        }
        Ok(())
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let span = self.dilation * (self.kernel - 1) + 1;
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if ph < span || pw < span {
            return Err(NnError::Geometry {
                op: "conv2d",
                detail: format!("input {h}x{w} smaller than receptive span {span}"),
            });
        }
        Ok(((ph - span) / self.stride + 1, (pw - span) / self.stride + 1))
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }
}

/// `c = op(a) · op(b)` (or `c += ...` when `accumulate`), all row-major.
///
/// `a` is logically `m×k`; with `a_t` it is stored as `k×m`. Likewise `b` is
/// logically `k×n`, stored as `n×k` when `b_t`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_t: bool,
    b: &[f32],
    b_t: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: bounds asserted above; strides describe the row-major layouts.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    src: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    g: &ConvGeometry,
    oh: usize,
    ow: usize,
    cols: &mut [f32],
) {
    let k = g.kernel;
    let ohw = oh * ow;
    let pad = g.padding as isize;
    for c in 0..channels {
        let plane = &src[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky * g.dilation) as isize - pad;
                    let drow = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h as isize {
                        drow.fill(0.0);
                        continue;
                    }
                    let srow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in drow.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx * g.dilation) as isize - pad;
                        *d = if ix >= 0 && ix < w as isize {
                            srow[ix as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn col2im_add(
    cols: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    g: &ConvGeometry,
    oh: usize,
    ow: usize,
    dst: &mut [f32],
) {
    let k = g.kernel;
    let ohw = oh * ow;
    let pad = g.padding as isize;
    for c in 0..channels {
        let plane = &mut dst[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ohw..(row + 1) * ohw];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky * g.dilation) as isize - pad;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let prow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * g.stride + kx * g.dilation) as isize - pad;
                        if ix >= 0 && ix < w as isize {
                            prow[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

fn check_operands(
    x: Shape,
    weight: Shape,
    bias: Option<Shape>,
    g: &ConvGeometry,
) -> Result<(usize, usize), NnError> {
    g.validate()?;
    if x.c != g.in_channels {
        return Err(mismatch(
            "conv2d",
            format!("input {x} has {} channels, expected {}", x.c, g.in_channels),
        ));
    }
    if weight != g.weight_shape() {
        return Err(mismatch(
            "conv2d",
            format!("weight {weight}, expected {}", g.weight_shape()),
        ));
    }
    if let Some(b) = bias {
        if b.numel() != g.out_channels {
            return Err(mismatch(
                "conv2d",
                format!("bias {b} for {} outputs", g.out_channels),
            ));
        }
    }
    g.output_hw(x.h, x.w)
}

pub fn conv2d_forward(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    g: &ConvGeometry,
) -> Result<Tensor, NnError> {
    let xs = x.shape();
    let (oh, ow) = check_operands(xs, weight.shape(), bias.map(Tensor::shape), g)?;
    let mut out = Tensor::zeros(Shape::new(xs.n, g.out_channels, oh, ow));
    let cin_g = g.in_channels / g.groups;
    let cout_g = g.out_channels / g.groups;
    let kk = cin_g * g.kernel * g.kernel;
    let ohw = oh * ow;
    let hw = xs.plane();
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0; kk * ohw]
    };
    for s in 0..xs.n {
        let sample = x.sample(s);
        let out_s = out.sample_mut(s);
        for grp in 0..g.groups {
            let xg = &sample[grp * cin_g * hw..(grp + 1) * cin_g * hw];
            let rhs: &[f32] = if g.is_pointwise() {
                xg
            } else {
                im2col(xg, cin_g, xs.h, xs.w, g, oh, ow, &mut cols);
                &cols
            };
            let wg = &weight.data()[grp * cout_g * kk..(grp + 1) * cout_g * kk];
            let og = &mut out_s[grp * cout_g * ohw..(grp + 1) * cout_g * ohw];
            gemm(cout_g, kk, ohw, wg, false, rhs, false, og, false);
        }
    }
    if let Some(b) = bias {
        for s in 0..xs.n {
            for (c, &bv) in b.data().iter().enumerate() {
                for v in out.plane_mut(s, c) {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads {
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    g: &ConvGeometry,
    dy: &Tensor,
    need_input_grad: bool,
) -> Result<ConvGrads, NnError> {
    let xs = x.shape();
    let (oh, ow) = check_operands(xs, weight.shape(), None, g)?;
    if dy.shape() != Shape::new(xs.n, g.out_channels, oh, ow) {
        return Err(mismatch(
            "conv2d backward",
            format!("upstream {}", dy.shape()),
        ));
    }
    let cin_g = g.in_channels / g.groups;
    let cout_g = g.out_channels / g.groups;
    let kk = cin_g * g.kernel * g.kernel;
    let ohw = oh * ow;
    let hw = xs.plane();
    let mut dw = Tensor::zeros(weight.shape());
    let mut dx = need_input_grad.then(|| Tensor::zeros(xs));
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise {
        Vec::new()
    } else {
        vec![0.0; kk * ohw]
    };
    let mut dcols = if pointwise || !need_input_grad {
        Vec::new()
    } else {
        vec![0.0; kk * ohw]
    };
    for s in 0..xs.n {
        let sample = x.sample(s);
        let dys = dy.sample(s);
        for grp in 0..g.groups {
            let xg = &sample[grp * cin_g * hw..(grp + 1) * cin_g * hw];
            let dyg = &dys[grp * cout_g * ohw..(grp + 1) * cout_g * ohw];
            let wg = &weight.data()[grp * cout_g * kk..(grp + 1) * cout_g * kk];
            let rhs: &[f32] = if pointwise {
                xg
            } else {
                im2col(xg, cin_g, xs.h, xs.w, g, oh, ow, &mut cols);
                &cols
            };
            let dwg = &mut dw.data_mut()[grp * cout_g * kk..(grp + 1) * cout_g * kk];
            gemm(cout_g, ohw, kk, dyg, false, rhs, true, dwg, true);
            if let Some(dx) = dx.as_mut() {
                let dxg = &mut dx.sample_mut(s)[grp * cin_g * hw..(grp + 1) * cin_g * hw];
                if pointwise {
                    gemm(kk, cout_g, ohw, wg, true, dyg, false, dxg, false);
                } else {
                    gemm(kk, cout_g, ohw, wg, true, dyg, false, &mut dcols, false);
                    col2im_add(&dcols, cin_g, xs.h, xs.w, g, oh, ow, dxg);
                }
            }
        }
    }
    let mut db = vec![0.0f32; g.out_channels];
    for s in 0..xs.n {
        for (c, acc) in db.iter_mut().enumerate() {
            *acc += dy.plane(s, c).iter().sum::<f32>();
        }
    }
    Ok(ConvGrads {
        input: dx,
        weight: dw,
        bias: db,
    })
}
