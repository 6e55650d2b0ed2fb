use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use super::kernels::{self, ConvGeometry};
use super::{Result, Tensor, TensorError};
use crate::Scalar;

/// Handle to a node on a [`Tape`]. Only meaningful for the tape that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Offset(Var, T),
    /// Elementwise product with a constant; carries relu/lrelu derivatives.
    Mask(Var, Rc<Tensor<T>>),
    Tanh(Var),
    Sqrt(Var),
    Recip(Var),
    Ln(Var),
    MatMul(Var, Var),
    Transpose(Var),
    /// `[a, b] -> [b]`
    SumRows(Var),
    /// `[b] -> [a, b]`
    SpreadRows(Var),
    /// `[a, b] -> [a]`
    SumCols(Var),
    /// `[a] -> [a, b]`
    SpreadCols(Var),
    Reshape(Var),
    Conv {
        x: Var,
        k: Var,
        stride: usize,
    },
    ConvT {
        x: Var,
        k: Var,
        stride: usize,
    },
    ConvWeightGrad {
        x: Var,
        g: Var,
        stride: usize,
    },
    Gather(Var, Rc<Vec<usize>>),
    ScatterAdd(Var, Rc<Vec<usize>>),
}

impl<T> Op<T> {
    fn inputs(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => [Some(a), Some(b)],
            Conv { x, k, .. } | ConvT { x, k, .. } => [Some(x), Some(k)],
            ConvWeightGrad { x, g, .. } => [Some(x), Some(g)],
            Scale(a, _) | Offset(a, _) | Mask(a, _) | Tanh(a) | Sqrt(a) | Recip(a) | Ln(a)
            | Transpose(a) | SumRows(a) | SpreadRows(a) | SumCols(a) | SpreadCols(a)
            | Reshape(a) | Gather(a, _) | ScatterAdd(a, _) => [Some(a), None],
        }
    }
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
    tracked: bool,
}

/// Append-only record of a differentiable computation.
///
/// Node ids increase in execution order, so every node's inputs precede it
/// and a reverse sweep over ids is a valid backward order.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

/// Gradients of a scalar with respect to every tracked leaf that was recorded
/// before it. Untracked leaves never appear.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    map: BTreeMap<Var, Tensor<T>>,
}

impl<T> Gradients<T> {
    pub fn get(&self, var: Var) -> Option<&Tensor<T>> {
        self.map.get(&var)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn param_err(op: &'static str, reason: impl Into<String>) -> TensorError {
    TensorError::Param {
        op,
        reason: reason.into(),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers a tracked leaf: it receives a gradient in [`Tape::backward`].
    pub fn param(&self, value: Tensor<T>) -> Var {
        self.push_leaf(value, true)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&self, value: Tensor<T>, tracked: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op: Op::Leaf,
            requires_grad: tracked,
            tracked,
        });
        Var(nodes.len() - 1)
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = op.inputs().iter().flatten().any(|v| nodes[v.0].requires_grad);
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
            tracked: false,
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    // ---- elementwise -------------------------------------------------

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(&self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(&self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(&self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn scale(&self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(out, Op::Scale(a, c))
    }

    pub fn offset(&self, a: Var, c: T) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::Offset(a, c))
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -T::one())
    }

    pub fn square(&self, a: Var) -> Var {
        self.mul(a, a).expect("operands share a shape")
    }

    /// Elementwise product with a constant tensor.
    pub fn mask(&self, a: Var, m: Rc<Tensor<T>>) -> Result<Var> {
        let out = self.value(a).zip_map(&m, "mask", |x, y| x * y)?;
        Ok(self.push(out, Op::Mask(a, m)))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.lrelu(a, T::zero())
    }

    pub fn lrelu(&self, a: Var, alpha: T) -> Var {
        let m = self
            .value(a)
            .map(|x| if x > T::zero() { T::one() } else { alpha });
        self.mask(a, Rc::new(m)).expect("mask built from operand")
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        self.push(out, Op::Tanh(a))
    }

    /// `(tanh(x / 2) + 1) / 2`
    pub fn sigmoid(&self, a: Var) -> Var {
        let half = T::of(0.5);
        let t = self.tanh(self.scale(a, half));
        self.offset(self.scale(t, half), half)
    }

    /// Square root; its derivative at zero is taken as zero.
    pub fn sqrt(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()).sqrt());
        self.push(out, Op::Sqrt(a))
    }

    /// Reciprocal with `1/0 := 0`.
    pub fn recip(&self, a: Var) -> Var {
        let out = self.value(a).map(safe_recip);
        self.push(out, Op::Recip(a))
    }

    /// Natural logarithm of a strictly positive tensor.
    pub fn ln(&self, a: Var) -> Result<Var> {
        let v = self.value(a);
        if v.data().iter().any(|&x| !(x > T::zero())) {
            return Err(TensorError::Param {
                op: "ln",
                reason: "argument must be strictly positive".into(),
            });
        }
        let out = v.map(|x| x.ln());
        Ok(self.push(out, Op::Ln(a)))
    }

    // ---- linear algebra ----------------------------------------------

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (sa, sb) = (av.shape(), bv.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = Tensor::new(&[m, n], kernels::matmul(av.data(), bv.data(), m, k, n))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let s = av.shape();
        if s.len() != 2 {
            return Err(param_err("transpose", format!("expected rank 2, got {s:?}")));
        }
        let out = Tensor::new(&[s[1], s[0]], kernels::transpose(av.data(), s[0], s[1]))?;
        Ok(self.push(out, Op::Transpose(a)))
    }

    /// `x[B, I] . w[I, O] + b[O]`
    pub fn dense(&self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (sx, sw, sb) = (self.shape(x), self.shape(w), self.shape(b));
        if sx.len() != 2 || sw.len() != 2 || sx[1] != sw[0] || sb != [sw[1]] {
            return Err(shape_err("dense", &sx, &sw));
        }
        let y = self.matmul(x, w)?;
        let bias = self.spread_rows(b, sx[0])?;
        self.add(y, bias)
    }

    // ---- reductions and broadcasts -----------------------------------

    fn sum_rows(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let s = av.shape();
        if s.len() != 2 {
            return Err(param_err("sum_rows", format!("expected rank 2, got {s:?}")));
        }
        let cols = s[1];
        let mut out = vec![T::zero(); cols];
        for r in av.data().chunks_exact(cols) {
            for (o, &v) in out.iter_mut().zip(r) {
                *o = *o + v;
            }
        }
        Ok(self.push(Tensor::new(&[cols], out)?, Op::SumRows(a)))
    }

    /// `[n] -> [rows, n]`
    pub fn spread_rows(&self, a: Var, rows: usize) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 1 || rows == 0 {
            return Err(param_err("spread_rows", format!("operand {:?}", av.shape())));
        }
        let n = av.numel();
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(av.data());
        }
        Ok(self.push(Tensor::new(&[rows, n], out)?, Op::SpreadRows(a)))
    }

    fn sum_cols(&self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let s = av.shape();
        if s.len() != 2 {
            return Err(param_err("sum_cols", format!("expected rank 2, got {s:?}")));
        }
        let out = av
            .data()
            .chunks_exact(s[1])
            .map(|r| r.iter().fold(T::zero(), |acc, &v| acc + v))
            .collect();
        Ok(self.push(Tensor::new(&[s[0]], out)?, Op::SumCols(a)))
    }

    fn spread_cols(&self, a: Var, cols: usize) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 1 || cols == 0 {
            return Err(param_err("spread_cols", format!("operand {:?}", av.shape())));
        }
        let mut out = Vec::with_capacity(av.numel() * cols);
        for &v in av.data() {
            out.extend(std::iter::repeat_n(v, cols));
        }
        Ok(self.push(Tensor::new(&[av.numel(), cols], out)?, Op::SpreadCols(a)))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = (*self.value(a)).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// Sum of all elements as a scalar (shape `[]`).
    pub fn sum(&self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let flat = self.reshape(a, &[1, n])?;
        let s = self.sum_cols(flat)?;
        self.reshape(s, &[])
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let n = self.value(a).numel();
        let s = self.sum(a)?;
        Ok(self.scale(s, T::of(1.0 / n as f64)))
    }

    /// Sum over every axis but the leading one: `[B, ...] -> [B]`.
    pub fn sum_per_row(&self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        let rows = *s
            .first()
            .ok_or_else(|| param_err("sum_per_row", "scalar operand"))?;
        let flat = self.reshape(a, &[rows, s.iter().skip(1).product()])?;
        self.sum_cols(flat)
    }

    /// Euclidean norm over all elements.
    pub fn l2_norm(&self, a: Var) -> Result<Var> {
        let sq = self.square(a);
        let s = self.sum(sq)?;
        Ok(self.sqrt(s))
    }

    /// Euclidean norm of each leading-axis row: `[B, ...] -> [B]`.
    pub fn l2_norm_rows(&self, a: Var) -> Result<Var> {
        let sq = self.square(a);
        let s = self.sum_per_row(sq)?;
        Ok(self.sqrt(s))
    }

    /// Adds a per-channel bias `b[C]` to `x[B, L, C]`.
    pub fn add_channel_bias(&self, x: Var, b: Var) -> Result<Var> {
        let s = self.shape(x);
        let c = *s.last().ok_or_else(|| param_err("bias", "scalar operand"))?;
        if self.shape(b) != [c] {
            return Err(shape_err("bias", &s, &self.shape(b)));
        }
        let rows = self.value(x).numel() / c;
        let flat = self.reshape(x, &[rows, c])?;
        let bias = self.spread_rows(b, rows)?;
        let y = self.add(flat, bias)?;
        self.reshape(y, &s)
    }

    // ---- convolutions --------------------------------------------------

    fn conv_dims(
        &self,
        op: &'static str,
        x: Var,
        k: Var,
        stride: usize,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        if stride == 0 {
            return Err(param_err(op, "stride must be positive"));
        }
        let (sx, sk) = (self.shape(x), self.shape(k));
        if sx.len() != 3 || sk.len() != 3 {
            return Err(shape_err(op, &sx, &sk));
        }
        if sk[0] % 2 == 0 {
            return Err(param_err(op, format!("kernel width {} must be odd", sk[0])));
        }
        Ok((sx, sk))
    }

    /// Zero-padded strided cross-correlation:
    /// `x[B, L, Cin] * k[K, Cin, Cout] -> [B, ceil(L / stride), Cout]`.
    pub fn conv1d(&self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let (sx, sk) = self.conv_dims("conv1d", x, k, stride)?;
        if sx[2] != sk[1] {
            return Err(shape_err("conv1d", &sx, &sk));
        }
        let geom = ConvGeometry::new(sx[1], sk[0], stride);
        let data = kernels::conv1d_forward(
            self.value(x).data(),
            self.value(k).data(),
            sx[0],
            geom,
            sk[1],
            sk[2],
        );
        let out = Tensor::new(&[sx[0], geom.out_len, sk[2]], data)?;
        Ok(self.push(out, Op::Conv { x, k, stride }))
    }

    /// Transposed convolution: `x[B, L, Cout] -> [B, L * stride, Cin]` for a
    /// kernel `k[K, Cin, Cout]`. It is the exact adjoint of [`Tape::conv1d`]
    /// with the same kernel, which is why the kernel's last axis is the
    /// channel count of `x`.
    pub fn conv1d_transpose(&self, x: Var, k: Var, stride: usize) -> Result<Var> {
        let len = self.shape(x).get(1).copied().unwrap_or(0);
        self.conv1d_transpose_to(x, k, stride, len * stride)
    }

    fn conv1d_transpose_to(&self, x: Var, k: Var, stride: usize, out_len: usize) -> Result<Var> {
        let (sx, sk) = self.conv_dims("conv1d_transpose", x, k, stride)?;
        if sx[2] != sk[2] || out_len == 0 || out_len.div_ceil(stride) != sx[1] {
            return Err(shape_err("conv1d_transpose", &sx, &sk));
        }
        let geom = ConvGeometry::new(out_len, sk[0], stride);
        let data = kernels::conv1d_adjoint(
            self.value(x).data(),
            self.value(k).data(),
            sx[0],
            geom,
            sk[1],
            sk[2],
        );
        let out = Tensor::new(&[sx[0], out_len, sk[1]], data)?;
        Ok(self.push(out, Op::ConvT { x, k, stride }))
    }

    fn conv1d_weight_grad(&self, x: Var, g: Var, kernel: usize, stride: usize) -> Result<Var> {
        let (sx, sg) = (self.shape(x), self.shape(g));
        if sx.len() != 3 || sg.len() != 3 || sx[0] != sg[0] || sx[1].div_ceil(stride) != sg[1] {
            return Err(shape_err("conv1d_weight_grad", &sx, &sg));
        }
        let geom = ConvGeometry::new(sx[1], kernel, stride);
        let data = kernels::conv1d_weight_grad(
            self.value(x).data(),
            self.value(g).data(),
            sx[0],
            geom,
            sx[2],
            sg[2],
        );
        let out = Tensor::new(&[kernel, sx[2], sg[2]], data)?;
        Ok(self.push(out, Op::ConvWeightGrad { x, g, stride }))
    }

    // ---- indexing ------------------------------------------------------

    /// `out[j] = a[index[j]]` over flat storage; the output keeps `a`'s shape.
    pub fn gather(&self, a: Var, index: Rc<Vec<usize>>) -> Result<Var> {
        let av = self.value(a);
        if index.len() != av.numel() || index.iter().any(|&i| i >= av.numel()) {
            return Err(param_err("gather", "index map must cover the operand"));
        }
        let data = index.iter().map(|&i| av.data()[i]).collect();
        let out = Tensor::new(av.shape(), data)?;
        Ok(self.push(out, Op::Gather(a, index)))
    }

    fn scatter_add(&self, a: Var, index: Rc<Vec<usize>>) -> Result<Var> {
        let av = self.value(a);
        let mut data = vec![T::zero(); av.numel()];
        for (&i, &v) in index.iter().zip(av.data()) {
            data[i] = data[i] + v;
        }
        let out = Tensor::new(av.shape(), data)?;
        Ok(self.push(out, Op::ScatterAdd(a, index)))
    }

    // ---- differentiation -----------------------------------------------

    /// Gradients of the scalar `out` with respect to `wrt`, recorded as new
    /// nodes on this tape. The results can be differentiated again.
    pub fn grad(&self, out: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        let out_shape = self.shape(out);
        if out_shape.iter().product::<usize>() != 1 {
            return Err(TensorError::Contract(format!(
                "differentiated output must be scalar, got shape {out_shape:?}"
            )));
        }
        let n = out.0 + 1;
        // needed[i]: node i is one of `wrt` or depends on one of them.
        let mut needed = vec![false; n];
        {
            let nodes = self.nodes.borrow();
            for w in wrt.iter().filter(|w| w.0 < n) {
                needed[w.0] = nodes[w.0].requires_grad;
            }
            for i in 0..n {
                if !needed[i] && nodes[i].requires_grad {
                    needed[i] = nodes[i].op.inputs().iter().flatten().any(|v| needed[v.0]);
                }
            }
        }
        let mut adj: Vec<Option<Var>> = vec![None; n];
        if needed[out.0] {
            adj[out.0] = Some(self.constant(Tensor::full(&out_shape, T::one())));
        }
        for id in (0..n).rev() {
            let Some(g) = adj[id] else { continue };
            let op = self.nodes.borrow()[id].op.clone();
            let want = |v: Var| needed[v.0];
            for (input, contrib) in self.vjp(Var(id), &op, g, want)? {
                adj[input.0] = Some(match adj[input.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|&w| match adj.get(w.0).copied().flatten() {
                Some(g) if needed[w.0] => g,
                _ => self.constant(Tensor::zeros(&self.shape(w))),
            })
            .collect())
    }

    /// Gradient of the scalar `loss` with respect to every tracked leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let params: Vec<Var> = {
            let nodes = self.nodes.borrow();
            (0..nodes.len().min(loss.0 + 1))
                .filter(|&i| nodes[i].tracked)
                .map(Var)
                .collect()
        };
        let grads = self.grad(loss, &params)?;
        Ok(Gradients {
            map: params
                .into_iter()
                .zip(grads)
                .map(|(p, g)| (p, (*self.value(g)).clone()))
                .collect(),
        })
    }

    /// `dD(m)/dm` for a critic `f` returning one scalar per leading-axis row
    /// of `m`. The returned node stays differentiable with respect to the
    /// critic parameters, so penalties built from it can be backpropagated.
    pub fn input_gradient<E: From<TensorError>>(
        &self,
        m: Var,
        f: impl FnOnce(&Self, Var) -> std::result::Result<Var, E>,
    ) -> std::result::Result<Var, E> {
        if !self.requires_grad(m) {
            return Err(TensorError::Contract("input_gradient needs a tracked input".into()).into());
        }
        let rows = self.shape(m).first().copied().unwrap_or(1);
        let scores = f(self, m)?;
        if self.value(scores).numel() != rows {
            return Err(TensorError::Contract(format!(
                "critic must return one scalar per row: {rows} rows, output shape {:?}",
                self.shape(scores)
            ))
            .into());
        }
        let total = self.sum(scores)?;
        Ok(self.grad(total, &[m])?.remove(0))
    }

    fn vjp(
        &self,
        me: Var,
        op: &Op<T>,
        g: Var,
        want: impl Fn(Var) -> bool,
    ) -> Result<Vec<(Var, Var)>> {
        let mut out = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*b) {
                    out.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*b) {
                    out.push((*b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    out.push((*a, self.mul(g, *b)?));
                }
                if want(*b) {
                    out.push((*b, self.mul(g, *a)?));
                }
            }
            Op::Scale(a, c) => out.push((*a, self.scale(g, *c))),
            Op::Offset(a, _) => out.push((*a, g)),
            Op::Mask(a, m) => out.push((*a, self.mask(g, Rc::clone(m))?)),
            Op::Tanh(a) => {
                // 1 - tanh^2, expressed through the output node
                let sq = self.square(me);
                let d = self.offset(self.neg(sq), T::one());
                out.push((*a, self.mul(g, d)?));
            }
            Op::Sqrt(a) => {
                let r = self.recip(me);
                let d = self.scale(r, T::of(0.5));
                out.push((*a, self.mul(g, d)?));
            }
            Op::Ln(a) => out.push((*a, self.mul(g, self.recip(*a))?)),
            Op::Recip(a) => {
                let sq = self.square(me);
                let d = self.neg(sq);
                out.push((*a, self.mul(g, d)?));
            }
            Op::MatMul(a, b) => {
                if want(*a) {
                    let bt = self.transpose(*b)?;
                    out.push((*a, self.matmul(g, bt)?));
                }
                if want(*b) {
                    let at = self.transpose(*a)?;
                    out.push((*b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => out.push((*a, self.transpose(g)?)),
            Op::SumRows(a) => {
                let rows = self.shape(*a)[0];
                out.push((*a, self.spread_rows(g, rows)?));
            }
            Op::SpreadRows(a) => out.push((*a, self.sum_rows(g)?)),
            Op::SumCols(a) => {
                let cols = self.shape(*a)[1];
                out.push((*a, self.spread_cols(g, cols)?));
            }
            Op::SpreadCols(a) => out.push((*a, self.sum_cols(g)?)),
            Op::Reshape(a) => {
                let s = self.shape(*a);
                out.push((*a, self.reshape(g, &s)?));
            }
            Op::Conv { x, k, stride } => {
                if want(*x) {
                    let len = self.shape(*x)[1];
                    out.push((*x, self.conv1d_transpose_to(g, *k, *stride, len)?));
                }
                if want(*k) {
                    let kernel = self.shape(*k)[0];
                    out.push((*k, self.conv1d_weight_grad(*x, g, kernel, *stride)?));
                }
            }
            Op::ConvT { x, k, stride, .. } => {
                if want(*x) {
                    out.push((*x, self.conv1d(g, *k, *stride)?));
                }
                if want(*k) {
                    let kernel = self.shape(*k)[0];
                    out.push((*k, self.conv1d_weight_grad(g, *x, kernel, *stride)?));
                }
            }
            Op::ConvWeightGrad { x, g: up, stride, .. } => {
                // <W(x, up), g> = <conv(x, g), up> = <x, convT(up, g)>
                if want(*x) {
                    let len = self.shape(*x)[1];
                    out.push((*x, self.conv1d_transpose_to(*up, g, *stride, len)?));
                }
                if want(*up) {
                    out.push((*up, self.conv1d(*x, g, *stride)?));
                }
            }
            Op::Gather(a, idx) => out.push((*a, self.scatter_add(g, Rc::clone(idx))?)),
            Op::ScatterAdd(a, idx) => out.push((*a, self.gather(g, Rc::clone(idx))?)),
        }
        Ok(out)
    }
}

fn safe_recip<T: Scalar>(x: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        x.recip()
    }
}
