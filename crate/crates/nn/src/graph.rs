//! Define-by-run tape: every op records its inputs and whatever it needs for
//! the reverse pass; [`Graph::backward`] walks the tape in reverse.

use crate::error::{mismatch, NnError};
use crate::kernels::{conv, norm, pool, resize};
use crate::params::{BufferId, ParamId, ParamStore};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in normalization layers; running stats are updated.
    Train,
    /// Running statistics; nothing is recorded for the store.
    Eval,
}

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Leaf,
    Param(ParamId),
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: conv::ConvGeometry,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Tensor,
        inv_std: Vec<f32>,
        batch_stats: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    Add(Var, Var),
    Concat(Vec<Var>),
    Resize(Var),
    GlobalAvgPool(Var),
    Broadcast(Var),
    PairNormalize {
        a: Var,
        b: Var,
    },
    ScaleBy {
        x: Var,
        s: Var,
        index: usize,
    },
}

struct Node {
    /// `None` for parameters, whose value lives in the store.
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Running-statistic update produced by a training-mode batch-norm op.
#[derive(Clone, Debug)]
pub struct BufferUpdate {
    pub buffer: BufferId,
    pub value: Tensor,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    mode: Mode,
    nodes: Vec<Node>,
    updates: Vec<BufferUpdate>,
}

/// Gradients from one backward pass.
pub struct Gradients {
    params: Vec<Option<Tensor>>,
    leaves: Vec<(Var, Tensor)>,
}

impl Gradients {
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    pub fn wrt(&self, leaf: Var) -> Option<&Tensor> {
        self.leaves.iter().find(|(v, _)| *v == leaf).map(|(_, t)| t)
    }

    pub fn sq_norm(&self) -> f64 {
        self.params.iter().flatten().map(Tensor::sq_norm).sum()
    }
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore, mode: Mode) -> Self {
        Self {
            store,
            mode,
            nodes: Vec::new(),
            updates: Vec::new(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            _ => unreachable!("only parameters are stored by reference"),
        }
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.value(v).shape()
    }

    /// Constant input; no gradient is propagated into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Input whose gradient is reported by [`Gradients::wrt`].
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: conv::ConvGeometry,
    ) -> Result<Var, NnError> {
        let out = conv::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|b| self.value(b)),
            &geom,
        )?;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(out, Op::Conv { x, w, b, geom }, needs))
    }

    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: (BufferId, BufferId),
        momentum: f32,
        eps: f32,
    ) -> Result<Var, NnError> {
        let c = self.shape(x).c;
        if self.value(gamma).numel() != c || self.value(beta).numel() != c {
            return Err(mismatch(
                "batch_norm",
                format!("{c} channels vs affine params"),
            ));
        }
        let train = self.mode == Mode::Train;
        let running_stats = (!train).then(|| {
            (
                self.store.buffer(running.0).data(),
                self.store.buffer(running.1).data(),
            )
        });
        let res = norm::batch_norm_forward(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            running_stats,
            eps,
        );
        if let Some((mean, var)) = res.batch_stats {
            for (buf, batch) in [(running.0, mean), (running.1, var)] {
                let mut t = self.store.buffer(buf).clone();
                for (r, b) in t.data_mut().iter_mut().zip(batch) {
                    *r = (1.0 - momentum) * *r + momentum * b;
                }
                self.updates.push(BufferUpdate {
                    buffer: buf,
                    value: t,
                });
            }
        }
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            res.output,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                normalized: res.normalized,
                inv_std: res.inv_std,
                batch_stats: train,
            },
            needs,
        ))
    }

    fn map(&mut self, x: Var, f: impl Fn(f32) -> f32, op: Op) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = f(*v));
        let needs = self.needs(x);
        self.push(out, op, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.map(x, softplus, Op::Softplus(x))
    }

    pub fn max_pool(&mut self, x: Var, kernel: usize, stride: usize, padding: usize) -> Var {
        let (out, argmax) = pool::max_pool_forward(self.value(x), kernel, stride, padding);
        let needs = self.needs(x);
        self.push(out, Op::MaxPool { x, argmax }, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(
                "add",
                format!("{} vs {}", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), needs))
    }

    /// Channel-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let first = *parts
            .first()
            .ok_or_else(|| mismatch("concat", "no inputs"))?;
        let base = self.shape(first);
        let mut channels = 0;
        for &p in parts {
            let s = self.shape(p);
            if (s.n, s.h, s.w) != (base.n, base.h, base.w) {
                return Err(mismatch("concat", format!("{s} vs {base}")));
            }
            channels += s.c;
        }
        let shape = Shape::new(base.n, channels, base.h, base.w);
        let mut out = Tensor::zeros(shape);
        for n in 0..base.n {
            let mut offset = 0;
            let dst = out.sample_mut(n);
            for &p in parts {
                let src = self.value(p).sample(n);
                dst[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::Concat(parts.to_vec()), needs))
    }

    pub fn resize_bilinear(&mut self, x: Var, h: usize, w: usize) -> Var {
        if (h, w) == (self.shape(x).h, self.shape(x).w) {
            return x;
        }
        let out = resize::bilinear_forward(self.value(x), h, w);
        let needs = self.needs(x);
        self.push(out, Op::Resize(x), needs)
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let out = pool::global_avg_pool(self.value(x));
        let needs = self.needs(x);
        self.push(out, Op::GlobalAvgPool(x), needs)
    }

    pub fn broadcast(&mut self, x: Var, h: usize, w: usize) -> Result<Var, NnError> {
        let s = self.shape(x);
        if (s.h, s.w) != (1, 1) {
            return Err(mismatch(
                "broadcast",
                format!("expected 1x1 planes, got {s}"),
            ));
        }
        let out = pool::broadcast_planes(self.value(x), h, w);
        let needs = self.needs(x);
        Ok(self.push(out, Op::Broadcast(x), needs))
    }

    /// Maps a pair of non-negative scalars `(a, b)` to
    /// `(a/(a+b) + eps, b/(a+b) + eps)` as a `[1, 2, 1, 1]` tensor. A zero
    /// sum falls back to `eps` as the denominator.
    pub fn pair_normalize(&mut self, a: Var, b: Var, eps: f32) -> Result<Var, NnError> {
        if self.value(a).numel() != 1 || self.value(b).numel() != 1 {
            return Err(mismatch("pair_normalize", "operands must be scalars"));
        }
        let (av, bv) = (self.value(a).data()[0], self.value(b).data()[0]);
        let (na, nb) = normalize_pair(av, bv, eps);
        let out = Tensor::from_vec(Shape::new(1, 2, 1, 1), vec![na, nb])?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::PairNormalize { a, b }, needs))
    }

    /// Multiplies `x` by element `index` of tensor `s`.
    pub fn scale_by(&mut self, x: Var, s: Var, index: usize) -> Result<Var, NnError> {
        let k = *self
            .value(s)
            .data()
            .get(index)
            .ok_or_else(|| mismatch("scale_by", format!("index {index} out of range")))?;
        let mut out = self.value(x).clone();
        out.scale(k);
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(out, Op::ScaleBy { x, s, index }, needs))
    }

    /// Running-statistic updates recorded in training mode.
    pub fn buffer_updates(&self) -> &[BufferUpdate] {
        &self.updates
    }

    pub fn into_buffer_updates(self) -> Vec<BufferUpdate> {
        self.updates
    }

    /// Reverse pass from `root`, seeded with `seed` (same shape as `root`).
    pub fn backward(&self, root: Var, seed: Tensor) -> Result<Gradients, NnError> {
        if seed.shape() != self.shape(root) {
            return Err(mismatch(
                "backward",
                format!("seed {} for root {}", seed.shape(), self.shape(root)),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut out = Gradients {
            params: vec![None; self.store.len()],
            leaves: Vec::new(),
        };
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => out.leaves.push((Var(i), g)),
                Op::Param(id) => match &mut out.params[id.0] {
                    Some(acc) => acc.add_assign(&g),
                    slot => *slot = Some(g),
                },
                Op::Conv { x, w, b, geom } => {
                    let cg = conv::conv2d_backward(
                        self.value(*x),
                        self.value(*w),
                        geom,
                        &g,
                        self.needs(*x),
                    )?;
                    if let Some(dx) = cg.input {
                        self.accumulate(&mut grads, *x, dx);
                    }
                    self.accumulate(&mut grads, *w, cg.weight);
                    if let Some(b) = b {
                        let db = Tensor::from_vec(self.shape(*b), cg.bias)?;
                        self.accumulate(&mut grads, *b, db);
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    normalized,
                    inv_std,
                    batch_stats,
                } => {
                    let bg = norm::batch_norm_backward(
                        &g,
                        normalized,
                        inv_std,
                        self.value(*gamma).data(),
                        *batch_stats,
                    );
                    self.accumulate(&mut grads, *x, bg.input);
                    let gs = self.shape(*gamma);
                    self.accumulate(&mut grads, *gamma, Tensor::from_vec(gs, bg.gamma)?);
                    let bs = self.shape(*beta);
                    self.accumulate(&mut grads, *beta, Tensor::from_vec(bs, bg.beta)?);
                }
                Op::Relu(x) => {
                    let y = self.value(Var(i));
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid(x) => {
                    let y = self.value(Var(i));
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(y.data()) {
                        *d *= v * (1.0 - v);
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Softplus(x) => {
                    let xin = self.value(*x);
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xin.data()) {
                        *d *= sigmoid(v);
                    }
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::MaxPool { x, argmax } => {
                    let dx = pool::max_pool_backward(&g, argmax, self.shape(*x));
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.clone());
                    self.accumulate(&mut grads, *b, g);
                }
                Op::Concat(parts) => {
                    let s = g.shape();
                    let mut offset = 0;
                    for &p in parts {
                        let ps = self.shape(p);
                        let len = ps.c * ps.plane();
                        if self.needs(p) {
                            let mut part = Tensor::zeros(ps);
                            for n in 0..s.n {
                                part.sample_mut(n)
                                    .copy_from_slice(&g.sample(n)[offset..offset + len]);
                            }
                            self.accumulate(&mut grads, p, part);
                        }
                        offset += len;
                    }
                }
                Op::Resize(x) => {
                    let dx = resize::bilinear_backward(&g, self.shape(*x));
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::GlobalAvgPool(x) => {
                    let s = self.shape(*x);
                    let mut dx = pool::broadcast_planes(&g, s.h, s.w);
                    dx.scale(1.0 / s.plane() as f32);
                    self.accumulate(&mut grads, *x, dx);
                }
                Op::Broadcast(x) => {
                    self.accumulate(&mut grads, *x, pool::sum_planes(&g));
                }
                Op::PairNormalize { a, b } => {
                    let (av, bv) = (self.value(*a).data()[0], self.value(*b).data()[0]);
                    let (ga, gb) = (g.data()[0], g.data()[1]);
                    let sum = av + bv;
                    let (da, db) = if sum > 0.0 {
                        let inv2 = 1.0 / (sum * sum);
                        ((ga * bv - gb * bv) * inv2, (gb * av - ga * av) * inv2)
                    } else {
                        (0.0, 0.0)
                    };
                    self.accumulate(&mut grads, *a, Tensor::scalar(da));
                    self.accumulate(&mut grads, *b, Tensor::scalar(db));
                }
                Op::ScaleBy { x, s, index } => {
                    let k = self.value(*s).data()[*index];
                    let xv = self.value(*x);
                    let dk: f64 = g
                        .data()
                        .iter()
                        .zip(xv.data())
                        .map(|(&a, &b)| a as f64 * b as f64)
                        .sum();
                    let mut ds = Tensor::zeros(self.shape(*s));
                    ds.data_mut()[*index] = dk as f32;
                    self.accumulate(&mut grads, *s, ds);
                    let mut dx = g;
                    dx.scale(k);
                    self.accumulate(&mut grads, *x, dx);
                }
            }
        }
        Ok(out)
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }
}

pub fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(v: f32) -> f32 {
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

/// `(a/(a+b) + eps, b/(a+b) + eps)`, with `eps` standing in for a zero sum.
pub fn normalize_pair(a: f32, b: f32, eps: f32) -> (f32, f32) {
    let sum = a + b;
    let denom = if sum > 0.0 { sum } else { eps };
    (a / denom + eps, b / denom + eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    /// Central finite differences of `f` around `x`, in f64 on top of f32 ops.
    fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
        let h = 1e-2f32;
        (0..x.numel())
            .map(|i| {
                let mut p = x.clone();
                p.data_mut()[i] += h;
                let mut m = x.clone();
                m.data_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h as f64)
            })
            .collect()
    }

    fn wavy(shape: Shape, k: f32) -> Tensor {
        Tensor::from_vec(
            shape,
            (0..shape.numel()).map(|i| (i as f32 * k).sin()).collect(),
        )
        .unwrap()
    }

    /// Scalar objective `<y, r>` for a fixed random-ish `r`.
    fn project(y: &Tensor) -> (f64, Tensor) {
        let r = wavy(y.shape(), 0.91);
        let v = y
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| (a * b) as f64)
            .sum();
        (v, r)
    }

    fn check_input_grad(build: impl Fn(&mut Graph, Var) -> Var, x: Tensor, tol: f64) {
        let store = ParamStore::new(0);
        let eval = |t: &Tensor| {
            let mut g = Graph::new(&store, Mode::Train);
            let v = g.input(t.clone());
            let y = build(&mut g, v);
            project(g.value(y)).0
        };
        let mut g = Graph::new(&store, Mode::Train);
        let v = g.input_with_grad(x.clone());
        let y = build(&mut g, v);
        let (_, r) = project(g.value(y));
        let grads = g.backward(y, r).unwrap();
        let analytic = grads.wrt(v).unwrap();
        let numeric = numeric_grad(&x, eval);
        for (a, n) in analytic.data().iter().zip(&numeric) {
            assert!(
                (*a as f64 - n).abs() <= tol * (1.0 + n.abs()),
                "analytic {a} numeric {n}"
            );
        }
    }

    #[test]
    fn pointwise_and_structural_ops_match_finite_differences() {
        let x = wavy(Shape::new(2, 3, 4, 5), 0.37);
        check_input_grad(|g, v| g.sigmoid(v), x.clone(), 1e-3);
        check_input_grad(|g, v| g.softplus(v), x.clone(), 1e-3);
        check_input_grad(|g, v| g.resize_bilinear(v, 9, 7), x.clone(), 1e-3);
        check_input_grad(
            |g, v| {
                let p = g.global_avg_pool(v);
                g.broadcast(p, 3, 3).unwrap()
            },
            x.clone(),
            1e-3,
        );
        check_input_grad(
            |g, v| {
                let s = g.sigmoid(v);
                g.concat(&[v, s]).unwrap()
            },
            x.clone(),
            1e-3,
        );
        check_input_grad(|g, v| g.add(v, v).unwrap(), x, 1e-3);
    }

    #[test]
    fn batch_norm_train_mode_gradient() {
        let mut store = ParamStore::new(3);
        let shape = Shape::new(1, 3, 1, 1);
        let gamma = store
            .add_param("bn.weight", shape, Init::Normal { std: 1.0 }, false)
            .unwrap();
        let beta = store
            .add_param("bn.bias", shape, Init::Constant(0.1), false)
            .unwrap();
        let rm = store.add_buffer("bn.rm", Tensor::zeros(shape)).unwrap();
        let rv = store.add_buffer("bn.rv", Tensor::full(shape, 1.0)).unwrap();
        let x = wavy(Shape::new(2, 3, 3, 3), 1.7);
        let build = |g: &mut Graph, v: Var| {
            let ga = g.param(gamma);
            let be = g.param(beta);
            let y = g.batch_norm(v, ga, be, (rm, rv), 0.1, 1e-5).unwrap();
            g.sigmoid(y)
        };
        let eval = |t: &Tensor| {
            let mut g = Graph::new(&store, Mode::Train);
            let v = g.input(t.clone());
            let y = build(&mut g, v);
            project(g.value(y)).0
        };
        let mut g = Graph::new(&store, Mode::Train);
        let v = g.input_with_grad(x.clone());
        let y = build(&mut g, v);
        let (_, r) = project(g.value(y));
        let grads = g.backward(y, r).unwrap();
        let numeric = numeric_grad(&x, eval);
        for (a, n) in grads.wrt(v).unwrap().data().iter().zip(&numeric) {
            assert!((*a as f64 - n).abs() < 2e-3 * (1.0 + n.abs()), "{a} {n}");
        }
        assert_eq!(g.buffer_updates().len(), 2);
    }

    #[test]
    fn conv_param_gradient_and_bias() {
        let mut store = ParamStore::new(5);
        let geom = conv::ConvGeometry::new(2, 4, 3).dilation(2);
        let w = store
            .add_param(
                "c.weight",
                geom.weight_shape(),
                Init::Normal { std: 0.3 },
                true,
            )
            .unwrap();
        let b = store
            .add_param(
                "c.bias",
                Shape::new(1, 4, 1, 1),
                Init::Constant(0.05),
                false,
            )
            .unwrap();
        let x = wavy(Shape::new(1, 2, 6, 6), 0.43);
        let run = |store: &ParamStore| {
            let mut g = Graph::new(store, Mode::Train);
            let v = g.input(x.clone());
            let wv = g.param(w);
            let bv = g.param(b);
            let y = g.conv2d(v, wv, Some(bv), geom).unwrap();
            let y = g.sigmoid(y);
            let (val, r) = project(g.value(y));
            let grads = g.backward(y, r).unwrap();
            (
                val,
                grads.param(w).unwrap().clone(),
                grads.param(b).unwrap().clone(),
            )
        };
        let (_, dw, db) = run(&store);
        let h = 1e-2f32;
        for (id, analytic) in [(w, &dw), (b, &db)] {
            for i in 0..analytic.numel() {
                let mut p = store.clone();
                p.value_mut(id).data_mut()[i] += h;
                let mut m = store.clone();
                m.value_mut(id).data_mut()[i] -= h;
                let n = (run(&p).0 - run(&m).0) / (2.0 * h as f64);
                let a = analytic.data()[i] as f64;
                assert!((a - n).abs() < 2e-3 * (1.0 + n.abs()), "{a} {n}");
            }
        }
    }

    #[test]
    fn pair_normalize_and_scale_gradients() {
        let mut store = ParamStore::new(0);
        let a = store
            .add_param("a", Shape::scalar(), Init::Constant(0.3), false)
            .unwrap();
        let b = store
            .add_param("b", Shape::scalar(), Init::Constant(-0.4), false)
            .unwrap();
        let x = wavy(Shape::new(1, 2, 2, 2), 0.8);
        let run = |store: &ParamStore| {
            let mut g = Graph::new(store, Mode::Train);
            let xv = g.input(x.clone());
            let (av, bv) = (g.param(a), g.param(b));
            let (sa, sb) = (g.softplus(av), g.softplus(bv));
            let w = g.pair_normalize(sa, sb, 1e-8).unwrap();
            let y1 = g.scale_by(xv, w, 0).unwrap();
            let y2 = g.scale_by(xv, w, 1).unwrap();
            let y2 = g.sigmoid(y2);
            let y = g.concat(&[y1, y2]).unwrap();
            let (val, r) = project(g.value(y));
            let grads = g.backward(y, r).unwrap();
            (
                val,
                grads.param(a).unwrap().data()[0],
                grads.param(b).unwrap().data()[0],
            )
        };
        let (_, da, db) = run(&store);
        let h = 1e-3f32;
        for (id, analytic) in [(a, da), (b, db)] {
            let mut p = store.clone();
            p.value_mut(id).data_mut()[0] += h;
            let mut m = store.clone();
            m.value_mut(id).data_mut()[0] -= h;
            let n = (run(&p).0 - run(&m).0) / (2.0 * h as f64);
            assert!((analytic as f64 - n).abs() < 1e-3, "{analytic} {n}");
        }
    }

    #[test]
    fn normalize_pair_handles_zero_sum() {
        let (a, b) = normalize_pair(0.0, 0.0, 1e-8);
        assert!(a > 0.0 && b > 0.0 && a.is_finite());
        let (a, b) = normalize_pair(3.0, 1.0, 0.0);
        assert_eq!((a, b), (0.75, 0.25));
    }

    #[test]
    fn eval_mode_records_no_updates() {
        let mut store = ParamStore::new(0);
        let s = Shape::new(1, 1, 1, 1);
        let ga = store.add_param("g", s, Init::Constant(1.0), false).unwrap();
        let be = store.add_param("b", s, Init::Constant(0.0), false).unwrap();
        let rm = store.add_buffer("rm", Tensor::zeros(s)).unwrap();
        let rv = store.add_buffer("rv", Tensor::full(s, 1.0)).unwrap();
        let mut g = Graph::new(&store, Mode::Eval);
        let x = g.input(Tensor::full(Shape::new(2, 1, 2, 2), 2.0));
        let (gv, bv) = (g.param(ga), g.param(be));
        let y = g.batch_norm(x, gv, bv, (rm, rv), 0.1, 0.0).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 2.0));
        assert!(g.buffer_updates().is_empty());
    }
}
