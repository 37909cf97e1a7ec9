//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation as a node while evaluating it
//! eagerly. [`Graph::backward`] walks the tape in reverse and adds
//! `d(output)/d(leaf)` into the gradient buffer of every variable leaf.
//! Leaf gradients accumulate across repeated `backward` calls until
//! [`Graph::zero_grad`] is called.

use crate::error::{AutodiffError, Result};
use crate::tensor::{axis_split, broadcast_map, broadcast_shape, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Neg,
    Relu,
    Gelu,
    Sigmoid,
    Tanh,
    Exp,
    Log,
    Square,
    Sqrt,
    Abs,
    Softplus,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(Binary, Var, Var),
    Unary(Unary, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Softmax(Var, usize),
    /// Input and per-row inverse standard deviation.
    LayerNorm(Var, Vec<f64>),
    Sum(Var),
    SumAxis(Var, usize),
    Concat(Vec<Var>, usize),
    Slice(Var, usize, usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A leaf whose gradient is tracked.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a variable leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    // ---- elementwise binary ops with broadcasting ----

    fn binary(&mut self, kind: Binary, a: Var, b: Var, name: &'static str) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
            Binary::Div => x / y,
        };
        let va = self.value(a).data();
        let vb = self.value(b).data();
        let out = if sa == sb {
            let data = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(sa, data)?
        } else {
            let shape = broadcast_shape(&sa, &sb).ok_or(AutodiffError::ShapeMismatch {
                op: name,
                lhs: sa.clone(),
                rhs: sb.clone(),
            })?;
            let ma = broadcast_map(&sa, &shape);
            let mb = broadcast_map(&sb, &shape);
            let data = ma.iter().zip(&mb).map(|(&i, &j)| f(va[i], vb[j])).collect();
            Tensor::new(shape, data)?
        };
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Binary(kind, a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b, "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, a, b, "div")
    }

    // ---- unary ops ----

    fn unary(&mut self, kind: Unary, a: Var) -> Var {
        let src = self.value(a);
        let f = |x: f64| match kind {
            Unary::Neg => -x,
            Unary::Relu => x.max(0.0),
            Unary::Gelu => 0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh()),
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Square => x * x,
            Unary::Sqrt => x.sqrt(),
            Unary::Abs => x.abs(),
            Unary::Softplus => softplus(x),
        };
        let data = src.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let ng = self.needs(a);
        self.push(out, Op::Unary(kind, a), ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(Unary::Neg, a)
    }
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Unary::Relu, a)
    }
    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        self.unary(Unary::Gelu, a)
    }
    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Unary::Sigmoid, a)
    }
    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Unary::Tanh, a)
    }
    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(Unary::Exp, a)
    }
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(Unary::Log, a)
    }
    pub fn square(&mut self, a: Var) -> Var {
        self.unary(Unary::Square, a)
    }
    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(Unary::Sqrt, a)
    }
    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(Unary::Abs, a)
    }
    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(Unary::Softplus, a)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|x| x * c).collect())
            .expect("same shape");
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, c), ng)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let out = Tensor::new(src.shape().to_vec(), src.data().iter().map(|x| x + c).collect())
            .expect("same shape");
        let ng = self.needs(a);
        self.push(out, Op::AddScalar(a), ng)
    }

    // ---- linear algebra and shape ops ----

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            &mut out,
            0.0,
        );
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), ng))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 2 {
            return Err(AutodiffError::Invalid {
                op: "transpose",
                msg: format!("expected rank 2, got {:?}", s),
            });
        }
        let (r, c) = (s[0], s[1]);
        let src = self.value(a).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let ng = self.needs(a);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).reshape(shape).map_err(|_| AutodiffError::ShapeMismatch {
            op: "reshape",
            lhs: self.shape(a).to_vec(),
            rhs: shape.to_vec(),
        })?;
        let ng = self.needs(a);
        Ok(self.push(t, Op::Reshape(a), ng))
    }

    fn check_axis(&self, a: Var, axis: usize, op: &'static str) -> Result<()> {
        if axis >= self.shape(a).len() {
            return Err(AutodiffError::Invalid {
                op,
                msg: format!("axis {} out of range for shape {:?}", axis, self.shape(a)),
            });
        }
        Ok(())
    }

    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis(a, axis, "softmax")?;
        let src = self.value(a);
        let (outer, len, inner) = axis_split(src.shape(), axis);
        let x = src.data();
        let mut out = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for l in 0..len {
                    max = max.max(x[base + l * inner]);
                }
                let mut sum = 0.0;
                for l in 0..len {
                    let e = (x[base + l * inner] - max).exp();
                    out[base + l * inner] = e;
                    sum += e;
                }
                for l in 0..len {
                    out[base + l * inner] /= sum;
                }
            }
        }
        let t = Tensor::new(src.shape().to_vec(), out)?;
        let ng = self.needs(a);
        Ok(self.push(t, Op::Softmax(a, axis), ng))
    }

    /// Normalizes over the last axis to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Result<Var> {
        let src = self.value(a);
        if src.rank() == 0 {
            return Err(AutodiffError::Invalid {
                op: "layer_norm",
                msg: "rank-0 input".into(),
            });
        }
        let width = *src.shape().last().unwrap();
        let rows = src.numel() / width.max(1);
        let x = src.data();
        let mut out = vec![0.0; x.len()];
        let mut inv = vec![0.0; rows];
        for r in 0..rows {
            let row = &x[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv[r] = is;
            for (o, v) in out[r * width..(r + 1) * width].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let t = Tensor::new(src.shape().to_vec(), out)?;
        let ng = self.needs(a);
        Ok(self.push(t, Op::LayerNorm(a, inv), ng))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let ng = self.needs(a);
        self.push(Tensor::scalar(s), Op::Sum(a), ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Sums over `axis`, removing it.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis(a, axis, "sum_axis")?;
        let src = self.value(a);
        let (outer, len, inner) = axis_split(src.shape(), axis);
        let x = src.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let row = &x[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (acc, v) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += v;
                }
            }
        }
        let mut shape = src.shape().to_vec();
        shape.remove(axis);
        let t = Tensor::new(shape, out)?;
        let ng = self.needs(a);
        Ok(self.push(t, Op::SumAxis(a, axis), ng))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        self.check_axis(a, axis, "mean_axis")?;
        let n = self.shape(a)[axis].max(1) as f64;
        let s = self.sum_axis(a, axis)?;
        Ok(self.scale(s, 1.0 / n))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(AutodiffError::Invalid {
            op: "concat",
            msg: "no inputs".into(),
        })?;
        self.check_axis(first, axis, "concat")?;
        let base = self.shape(first).to_vec();
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = vec![0.0; outer * total * inner];
        let mut offset = 0;
        for &p in parts {
            let len = self.shape(p)[axis];
            let x = self.value(p).data();
            for o in 0..outer {
                let dst = (o * total + offset) * inner;
                out[dst..dst + len * inner].copy_from_slice(&x[o * len * inner..(o + 1) * len * inner]);
            }
            offset += len;
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Tensor::new(shape, out)?, Op::Concat(parts.to_vec(), axis), ng))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, end: usize) -> Result<Var> {
        self.check_axis(a, axis, "slice")?;
        let src = self.value(a);
        let (outer, len, inner) = axis_split(src.shape(), axis);
        if start > end || end > len {
            return Err(AutodiffError::Invalid {
                op: "slice",
                msg: format!("range {}..{} out of bounds for shape {:?}", start, end, src.shape()),
            });
        }
        let w = end - start;
        let x = src.data();
        let mut out = Vec::with_capacity(outer * w * inner);
        for o in 0..outer {
            out.extend_from_slice(&x[(o * len + start) * inner..(o * len + end) * inner]);
        }
        let mut shape = src.shape().to_vec();
        shape[axis] = w;
        let ng = self.needs(a);
        Ok(self.push(Tensor::new(shape, out)?, Op::Slice(a, axis, start), ng))
    }

    // ---- reverse pass ----

    /// Back-propagates from a one-element `output`, adding into the
    /// gradients of every variable leaf it depends on.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).numel() != 1 {
            return Err(AutodiffError::Invalid {
                op: "backward",
                msg: format!("output must hold one value, has shape {:?}", self.shape(output)),
            });
        }
        let mut pass: Vec<Option<Tensor>> = (0..=output.0).map(|_| None).collect();
        pass[output.0] = Some(Tensor::full(self.shape(output), 1.0));
        for i in (0..=output.0).rev() {
            let Some(dy) = pass[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                match &mut self.grads[i] {
                    Some(g) => g.add_assign(&dy),
                    slot => *slot = Some(dy),
                }
                continue;
            }
            self.propagate(i, &dy, &mut pass)?;
        }
        Ok(())
    }

    fn accumulate(&self, pass: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut pass[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, dy: &Tensor, pass: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = node.value.data();
        let g = dy.data();
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => {
                let (a, b) = (*a, *b);
                let xa = self.value(a);
                let xb = self.value(b);
                let out_shape = node.value.shape();
                let same = xa.shape() == xb.shape();
                let ma = (!same).then(|| broadcast_map(xa.shape(), out_shape));
                let mb = (!same).then(|| broadcast_map(xb.shape(), out_shape));
                let ia = |k: usize| ma.as_ref().map_or(k, |m| m[k]);
                let ib = |k: usize| mb.as_ref().map_or(k, |m| m[k]);
                let (va, vb) = (xa.data(), xb.data());
                if self.needs(a) {
                    let mut ga = vec![0.0; va.len()];
                    for k in 0..g.len() {
                        let d = match kind {
                            Binary::Add | Binary::Sub => g[k],
                            Binary::Mul => g[k] * vb[ib(k)],
                            Binary::Div => g[k] / vb[ib(k)],
                        };
                        ga[ia(k)] += d;
                    }
                    self.accumulate(pass, a, Tensor::new(xa.shape().to_vec(), ga)?);
                }
                if self.needs(b) {
                    let mut gb = vec![0.0; vb.len()];
                    for k in 0..g.len() {
                        let d = match kind {
                            Binary::Add => g[k],
                            Binary::Sub => -g[k],
                            Binary::Mul => g[k] * va[ia(k)],
                            Binary::Div => -g[k] * va[ia(k)] / (vb[ib(k)] * vb[ib(k)]),
                        };
                        gb[ib(k)] += d;
                    }
                    self.accumulate(pass, b, Tensor::new(xb.shape().to_vec(), gb)?);
                }
            }
            Op::Unary(kind, a) => {
                let x = self.value(*a).data();
                let d: Vec<f64> = (0..g.len())
                    .map(|k| {
                        let (xk, yk) = (x[k], y[k]);
                        g[k] * match kind {
                            Unary::Neg => -1.0,
                            Unary::Relu => {
                                if xk > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Gelu => {
                                let u = GELU_C * (xk + 0.044715 * xk * xk * xk);
                                let t = u.tanh();
                                let du = GELU_C * (1.0 + 3.0 * 0.044715 * xk * xk);
                                0.5 * (1.0 + t) + 0.5 * xk * (1.0 - t * t) * du
                            }
                            Unary::Sigmoid => yk * (1.0 - yk),
                            Unary::Tanh => 1.0 - yk * yk,
                            Unary::Exp => yk,
                            Unary::Log => 1.0 / xk,
                            Unary::Square => 2.0 * xk,
                            Unary::Sqrt => 0.5 / yk,
                            Unary::Abs => {
                                if xk > 0.0 {
                                    1.0
                                } else if xk < 0.0 {
                                    -1.0
                                } else {
                                    0.0
                                }
                            }
                            Unary::Softplus => sigmoid(xk),
                        }
                    })
                    .collect();
                self.accumulate(pass, *a, Tensor::new(node.value.shape().to_vec(), d)?);
            }
            Op::Scale(a, c) => {
                let d = g.iter().map(|v| v * c).collect();
                self.accumulate(pass, *a, Tensor::new(dy.shape().to_vec(), d)?);
            }
            Op::AddScalar(a) => self.accumulate(pass, *a, dy.clone()),
            Op::MatMul(a, b) => {
                let (a, b) = (*a, *b);
                let sa = self.shape(a);
                let (m, k) = (sa[0], sa[1]);
                let n = self.shape(b)[1];
                if self.needs(a) {
                    // dA = dY . B^T
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, (n as isize, 1), self.value(b).data(), (1, n as isize), &mut ga, 0.0);
                    self.accumulate(pass, a, Tensor::new(vec![m, k], ga)?);
                }
                if self.needs(b) {
                    // dB = A^T . dY
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, self.value(a).data(), (1, k as isize), g, (n as isize, 1), &mut gb, 0.0);
                    self.accumulate(pass, b, Tensor::new(vec![k, n], gb)?);
                }
            }
            Op::Transpose(a) => {
                let s = dy.shape();
                let (r, c) = (s[0], s[1]);
                let mut out = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        out[j * r + i] = g[i * c + j];
                    }
                }
                self.accumulate(pass, *a, Tensor::new(vec![c, r], out)?);
            }
            Op::Reshape(a) => {
                let t = dy.reshape(self.shape(*a))?;
                self.accumulate(pass, *a, t);
            }
            Op::Softmax(a, axis) => {
                let (outer, len, inner) = axis_split(dy.shape(), *axis);
                let mut out = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let dot: f64 = (0..len).map(|l| g[base + l * inner] * y[base + l * inner]).sum();
                        for l in 0..len {
                            let k = base + l * inner;
                            out[k] = y[k] * (g[k] - dot);
                        }
                    }
                }
                self.accumulate(pass, *a, Tensor::new(dy.shape().to_vec(), out)?);
            }
            Op::LayerNorm(a, inv) => {
                let width = *dy.shape().last().unwrap();
                let mut out = vec![0.0; g.len()];
                for (r, is) in inv.iter().enumerate() {
                    let gr = &g[r * width..(r + 1) * width];
                    let yr = &y[r * width..(r + 1) * width];
                    let mg = gr.iter().sum::<f64>() / width as f64;
                    let mgy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / width as f64;
                    for j in 0..width {
                        out[r * width + j] = is * (gr[j] - mg - yr[j] * mgy);
                    }
                }
                self.accumulate(pass, *a, Tensor::new(dy.shape().to_vec(), out)?);
            }
            Op::Sum(a) => {
                let t = Tensor::full(self.shape(*a), dy.item());
                self.accumulate(pass, *a, t);
            }
            Op::SumAxis(a, axis) => {
                let shape = self.shape(*a).to_vec();
                let (outer, len, inner) = axis_split(&shape, *axis);
                let mut out = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        out[(o * len + l) * inner..(o * len + l + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                self.accumulate(pass, *a, Tensor::new(shape, out)?);
            }
            Op::Concat(parts, axis) => {
                let (outer, total, inner) = axis_split(dy.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let shape = self.shape(p).to_vec();
                    let len = shape[*axis];
                    if self.needs(p) {
                        let mut out = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let src = (o * total + offset) * inner;
                            out.extend_from_slice(&g[src..src + len * inner]);
                        }
                        self.accumulate(pass, p, Tensor::new(shape, out)?);
                    }
                    offset += len;
                }
            }
            Op::Slice(a, axis, start) => {
                let shape = self.shape(*a).to_vec();
                let (outer, len, inner) = axis_split(&shape, *axis);
                let w = dy.shape()[*axis];
                let mut out = vec![0.0; outer * len * inner];
                for o in 0..outer {
                    let dst = (o * len + start) * inner;
                    out[dst..dst + w * inner].copy_from_slice(&g[o * w * inner..(o + 1) * w * inner]);
                }
                self.accumulate(pass, *a, Tensor::new(shape, out)?);
            }
        }
        Ok(())
    }
}

/// `c = a . b + beta * c` with explicit (row, col) strides for `a` and `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    // SAFETY: strides describe in-bounds row-major views of the slices above.
    unsafe {
        matrixmultiply::dgemm(
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
