//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] is an append-only tape: every op pushes a node holding its
//! forward value, so insertion order is a topological order and the reverse
//! sweep is a single backwards loop. Parameters are borrowed, not copied.

use std::borrow::Cow;

use super::tensor::{gemm_acc, gemm_at_acc, gemm_bt_acc, Shape, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    SumAxis(Var, usize),
    Concat(Vec<Var>),
    Slice { x: Var, axis: usize, start: usize },
    MaskFill { x: Var, mask: Vec<bool> },
    Reshape(Var),
    Expand { x: Var, axis: usize },
    Clamp { x: Var, lo: f64, hi: f64 },
    Minimum(Var, Var),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
}

fn shape_err(op: &'static str, a: Shape, b: Shape) -> Error {
    Error::Shape {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

/// `b` broadcasts against `a` when its dims are a suffix of `a`'s dims.
fn broadcasts(a: Shape, b: Shape) -> bool {
    let (ad, bd) = (a.dims(), b.dims());
    bd.len() <= ad.len() && ad[ad.len() - bd.len()..] == *bd
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericFault(name));
        }
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            needs_grad,
        });
        self.grads.push(None);
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Cow<'a, Tensor>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf borrowed from the caller.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(t), true)
    }

    /// Trainable leaf owned by the graph.
    pub fn param_owned(&mut self, t: Tensor) -> Var {
        self.leaf(Cow::Owned(t), true)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(Cow::Owned(t), false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.leaf(Cow::Borrowed(t), false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// Gradient accumulated by the last [`backward`](Self::backward) call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn unary(&mut self, x: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::from_parts(t.shape(), t.data().iter().map(|&v| f(v)).collect());
        let ng = self.ng(x);
        self.push(out, op, ng, name)
    }

    /// `a[.., k] · b[k, m] → [.., m]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.rank() == 0 || sb.rank() != 2 || sa.last() != sb.dim(0) {
            return Err(shape_err("matmul", sa, sb));
        }
        let (k, m) = (sb.dim(0), sb.dim(1));
        let n = sa.numel() / k;
        let mut dims = sa.to_vec();
        *dims.last_mut().unwrap() = m;
        let mut out = vec![0.0; n * m];
        gemm_acc(self.data(a), self.data(b), &mut out, n, k, m);
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::new(&dims, out)?, Op::MatMul(a, b), ng, "matmul")
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcasts(sa, sb) {
            return Err(shape_err(name, sa, sb));
        }
        let bd = self.data(b);
        let nb = bd.len();
        let out: Vec<f64> = self
            .data(a)
            .chunks(nb)
            .flat_map(|chunk| chunk.iter().zip(bd).map(|(&x, &y)| f(x, y)))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(Tensor::from_parts(sa, out), op, ng, name)
    }

    /// Elementwise sum; `b` may broadcast over `a`'s leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(shape_err("minimum", sa, sb));
        }
        self.binary(a, b, Op::Minimum(a, b), "minimum", f64::min)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::Scale(x, c), "scale", |v| v * c)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Result<Var> {
        self.unary(x, Op::AddScalar(x), "add_scalar", |v| v + c)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Tanh(x), "tanh", f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Relu(x), "relu", |v| v.max(0.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Sigmoid(x), "sigmoid", sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Exp(x), "exp", f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Log(x), "log", f64::ln)
    }

    pub fn square(&mut self, x: Var) -> Result<Var> {
        self.unary(x, Op::Square(x), "square", |v| v * v)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(x, Op::Clamp { x, lo, hi }, "clamp", |v| v.clamp(lo, hi))
    }

    /// Softmax over the last axis, stabilised by max subtraction.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let w = t.shape().last();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(w) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let out = Tensor::from_parts(t.shape(), out);
        let ng = self.ng(x);
        self.push(out, Op::Softmax(x), ng, "softmax")
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let w = t.shape().last();
        let mut out = t.data().to_vec();
        for row in out.chunks_mut(w) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor::from_parts(t.shape(), out);
        let ng = self.ng(x);
        self.push(out, Op::LogSoftmax(x), ng, "log_softmax")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.data(x).iter().sum();
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng, "sum")
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.data(x);
        let s = d.iter().sum::<f64>() / d.len() as f64;
        let ng = self.ng(x);
        self.push(Tensor::scalar(s), Op::Mean(x), ng, "mean")
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x);
        if axis >= s.rank() {
            return Err(Error::Contract(format!("sum_axis: axis {axis} on {s:?}")));
        }
        let (outer, n, inner) = s.split(axis);
        let d = self.data(x);
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..n {
                let src = &d[(o * n + k) * inner..(o * n + k + 1) * inner];
                for (dst, &v) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += v;
                }
            }
        }
        let mut dims = s.to_vec();
        dims.remove(axis);
        let ng = self.ng(x);
        self.push(Tensor::new(&dims, out)?, Op::SumAxis(x, axis), ng, "sum_axis")
    }

    /// Concatenate along the last axis.
    pub fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("concat of nothing".into()))?;
        let s0 = self.shape(first);
        let lead = s0.numel() / s0.last();
        let mut total = 0;
        for &x in xs {
            let s = self.shape(x);
            if s.rank() != s0.rank() || s.dims()[..s.rank() - 1] != s0.dims()[..s0.rank() - 1] {
                return Err(shape_err("concat", s0, s));
            }
            total += s.last();
        }
        let mut out = vec![0.0; lead * total];
        let mut offset = 0;
        for &x in xs {
            let w = self.shape(x).last();
            let d = self.data(x);
            for r in 0..lead {
                out[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&d[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut dims = s0.to_vec();
        *dims.last_mut().unwrap() = total;
        let ng = xs.iter().any(|&x| self.ng(x));
        self.push(Tensor::new(&dims, out)?, Op::Concat(xs.to_vec()), ng, "concat")
    }

    /// Take `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if axis >= s.rank() || start + len > s.dim(axis) {
            return Err(Error::Shape {
                op: "slice",
                lhs: s.to_vec(),
                rhs: vec![axis, start, len],
            });
        }
        let (outer, n, inner) = s.split(axis);
        let d = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&d[base..base + len * inner]);
        }
        let mut dims = s.to_vec();
        dims[axis] = len;
        let ng = self.ng(x);
        self.push(Tensor::new(&dims, out)?, Op::Slice { x, axis, start }, ng, "slice")
    }

    /// Replace entries where `mask` is true with `value`.
    pub fn mask_fill(&mut self, x: Var, mask: &[bool], value: f64) -> Result<Var> {
        let s = self.shape(x);
        if mask.len() != s.numel() {
            return Err(Error::Shape {
                op: "mask_fill",
                lhs: s.to_vec(),
                rhs: vec![mask.len()],
            });
        }
        let out: Vec<f64> = self
            .data(x)
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { value } else { v })
            .collect();
        let ng = self.ng(x);
        let op = Op::MaskFill {
            x,
            mask: mask.to_vec(),
        };
        self.push(Tensor::from_parts(s, out), op, ng, "mask_fill")
    }

    pub fn reshape(&mut self, x: Var, dims: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(dims)?;
        let ng = self.ng(x);
        self.push(t, Op::Reshape(x), ng, "reshape")
    }

    /// Insert a new axis of length `n` at `axis`, repeating the input.
    pub fn expand(&mut self, x: Var, axis: usize, n: usize) -> Result<Var> {
        let s = self.shape(x);
        if axis > s.rank() {
            return Err(Error::Contract(format!("expand: axis {axis} on {s:?}")));
        }
        let mut dims = s.to_vec();
        dims.insert(axis, n);
        let outer: usize = s.dims()[..axis].iter().product();
        let inner: usize = s.dims()[axis..].iter().product();
        let d = self.data(x);
        let mut out = Vec::with_capacity(outer * n * inner);
        for o in 0..outer {
            let src = &d[o * inner..(o + 1) * inner];
            for _ in 0..n {
                out.extend_from_slice(src);
            }
        }
        let ng = self.ng(x);
        self.push(Tensor::new(&dims, out)?, Op::Expand { x, axis }, ng, "expand")
    }

    /// Reverse sweep from a single-element root. Gradients from any previous
    /// sweep are discarded first.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                self.shape(root)
            )));
        }
        self.grads.iter_mut().for_each(|g| *g = None);
        self.grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            if self.nodes[idx].needs_grad {
                self.propagate(idx, &g);
            }
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        let nodes = &self.nodes;
        let grads = &mut self.grads;
        let val = |v: Var| nodes[v.0].value.data();
        let shape = |v: Var| nodes[v.0].value.shape();
        match &nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (sa, sb) = (shape(a), shape(b));
                let (k, m) = (sb.dim(0), sb.dim(1));
                let n = sa.numel() / k;
                if let Some(ga) = acc(nodes, grads, a) {
                    gemm_bt_acc(g, val(b), ga, n, k, m);
                }
                if let Some(gb) = acc(nodes, grads, b) {
                    gemm_at_acc(val(a), g, gb, n, k, m);
                }
            }
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let sign = if matches!(nodes[idx].op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = acc(nodes, grads, a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
                if let Some(gb) = acc(nodes, grads, b) {
                    let nb = gb.len();
                    for chunk in g.chunks(nb) {
                        gb.iter_mut().zip(chunk).for_each(|(x, &y)| *x += sign * y);
                    }
                }
            }
            &Op::Mul(a, b) => {
                if let Some(ga) = acc(nodes, grads, a) {
                    let bd = val(b);
                    let nb = bd.len();
                    for (gc, gi) in ga.chunks_mut(nb).zip(g.chunks(nb)) {
                        for ((x, &y), &bv) in gc.iter_mut().zip(gi).zip(bd) {
                            *x += y * bv;
                        }
                    }
                }
                if let Some(gb) = acc(nodes, grads, b) {
                    let nb = gb.len();
                    for (ac, gi) in val(a).chunks(nb).zip(g.chunks(nb)) {
                        for ((x, &y), &av) in gb.iter_mut().zip(gi).zip(ac) {
                            *x += y * av;
                        }
                    }
                }
            }
            &Op::Minimum(a, b) => {
                let (ad, bd) = (val(a), val(b));
                if let Some(ga) = acc(nodes, grads, a) {
                    for i in 0..g.len() {
                        if ad[i] <= bd[i] {
                            ga[i] += g[i];
                        }
                    }
                }
                if let Some(gb) = acc(nodes, grads, b) {
                    for i in 0..g.len() {
                        if ad[i] > bd[i] {
                            gb[i] += g[i];
                        }
                    }
                }
            }
            &Op::Scale(x, c) => {
                if let Some(gx) = acc(nodes, grads, x) {
                    gx.iter_mut().zip(g).for_each(|(a, &b)| *a += c * b);
                }
            }
            &Op::AddScalar(x) | &Op::Reshape(x) => {
                if let Some(gx) = acc(nodes, grads, x) {
                    gx.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
                }
            }
            &Op::Tanh(x) => pointwise(nodes, grads, x, g, val(Var(idx)), |y| 1.0 - y * y),
            &Op::Sigmoid(x) => pointwise(nodes, grads, x, g, val(Var(idx)), |y| y * (1.0 - y)),
            &Op::Exp(x) => pointwise(nodes, grads, x, g, val(Var(idx)), |y| y),
            &Op::Relu(x) => {
                pointwise(nodes, grads, x, g, val(x), |v| if v > 0.0 { 1.0 } else { 0.0 })
            }
            &Op::Log(x) => pointwise(nodes, grads, x, g, val(x), |v| 1.0 / v),
            &Op::Square(x) => pointwise(nodes, grads, x, g, val(x), |v| 2.0 * v),
            &Op::Clamp { x, lo, hi } => pointwise(nodes, grads, x, g, val(x), |v| {
                if (lo..=hi).contains(&v) {
                    1.0
                } else {
                    0.0
                }
            }),
            &Op::Softmax(x) => {
                let y = val(Var(idx));
                let w = shape(x).last();
                if let Some(gx) = acc(nodes, grads, x) {
                    for ((gr, yr), gi) in gx.chunks_mut(w).zip(y.chunks(w)).zip(g.chunks(w)) {
                        let dot: f64 = yr.iter().zip(gi).map(|(a, b)| a * b).sum();
                        for ((o, &yv), &gv) in gr.iter_mut().zip(yr).zip(gi) {
                            *o += yv * (gv - dot);
                        }
                    }
                }
            }
            &Op::LogSoftmax(x) => {
                let y = val(Var(idx));
                let w = shape(x).last();
                if let Some(gx) = acc(nodes, grads, x) {
                    for ((gr, yr), gi) in gx.chunks_mut(w).zip(y.chunks(w)).zip(g.chunks(w)) {
                        let total: f64 = gi.iter().sum();
                        for ((o, &yv), &gv) in gr.iter_mut().zip(yr).zip(gi) {
                            *o += gv - yv.exp() * total;
                        }
                    }
                }
            }
            &Op::Sum(x) => {
                if let Some(gx) = acc(nodes, grads, x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            &Op::Mean(x) => {
                if let Some(gx) = acc(nodes, grads, x) {
                    let c = g[0] / gx.len() as f64;
                    gx.iter_mut().for_each(|a| *a += c);
                }
            }
            &Op::SumAxis(x, axis) => {
                let (outer, n, inner) = shape(x).split(axis);
                if let Some(gx) = acc(nodes, grads, x) {
                    for o in 0..outer {
                        let src = &g[o * inner..(o + 1) * inner];
                        for k in 0..n {
                            let dst = &mut gx[(o * n + k) * inner..(o * n + k + 1) * inner];
                            dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
                        }
                    }
                }
            }
            Op::Concat(xs) => {
                let total = shape(Var(idx)).last();
                let lead = g.len() / total;
                let mut offset = 0;
                for &x in xs {
                    let w = shape(x).last();
                    if let Some(gx) = acc(nodes, grads, x) {
                        for r in 0..lead {
                            let src = &g[r * total + offset..r * total + offset + w];
                            gx[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(a, &b)| *a += b);
                        }
                    }
                    offset += w;
                }
            }
            &Op::Slice { x, axis, start } => {
                let (outer, n, inner) = shape(x).split(axis);
                let len = shape(Var(idx)).dim(axis);
                if let Some(gx) = acc(nodes, grads, x) {
                    for o in 0..outer {
                        let base = (o * n + start) * inner;
                        let src = &g[o * len * inner..(o + 1) * len * inner];
                        gx[base..base + len * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, &b)| *a += b);
                    }
                }
            }
            Op::MaskFill { x, mask } => {
                if let Some(gx) = acc(nodes, grads, *x) {
                    for ((a, &b), &m) in gx.iter_mut().zip(g).zip(mask) {
                        if !m {
                            *a += b;
                        }
                    }
                }
            }
            &Op::Expand { x, axis } => {
                let s = shape(x);
                let n = shape(Var(idx)).dim(axis);
                let outer: usize = s.dims()[..axis].iter().product();
                let inner: usize = s.dims()[axis..].iter().product();
                if let Some(gx) = acc(nodes, grads, x) {
                    for o in 0..outer {
                        for k in 0..n {
                            let src = &g[(o * n + k) * inner..(o * n + k + 1) * inner];
                            gx[o * inner..(o + 1) * inner]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(a, &b)| *a += b);
                        }
                    }
                }
            }
        }
    }
}

fn acc<'g>(nodes: &[Node<'_>], grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut Vec<f64>> {
    if !nodes[v.0].needs_grad {
        return None;
    }
    let n = nodes[v.0].value.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn pointwise(
    nodes: &[Node<'_>],
    grads: &mut [Option<Vec<f64>>],
    x: Var,
    g: &[f64],
    source: &[f64],
    f: impl Fn(f64) -> f64,
) {
    if let Some(gx) = acc(nodes, grads, x) {
        for ((a, &b), &v) in gx.iter_mut().zip(g).zip(source) {
            *a += b * f(v);
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
