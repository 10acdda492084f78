use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{axis_split, strides, Tensor};
use crate::error::{shape_err, Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(BinOp, Var, Var),
    Scale(Var, f64),
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax { x: Var, axis: usize },
    Dropout { x: Var, mask: Vec<f64> },
    Conv1d { x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize },
    Max { x: Var, argmax: Vec<usize> },
    Mean { x: Var, axis: usize },
    Sum(Var),
    LogClamp { x: Var, floor: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward computation so gradients can be propagated back
/// through it.
///
/// Nodes are appended in evaluation order, so node indices already form a
/// topological order and [`Tape::backward`] walks them in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    bound: Vec<Option<Var>>,
    params: Vec<(ParamId, Var)>,
}

/// Gradients produced by one backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    /// Gradient with respect to `v`, if any path from `v` reached the loss.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    /// Adds `scale ·` every parameter gradient into `acc`, which is indexed
    /// like the parameter store.
    pub fn accumulate(&self, acc: &mut [Tensor], scale: f64) {
        for (id, v) in &self.params {
            if let Some(g) = self.wrt(*v) {
                for (a, &gi) in acc[id.0].data_mut().iter_mut().zip(g) {
                    *a += scale * gi;
                }
            }
        }
    }

    /// Gradients shaped like the parameters; unused parameters get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store
            .tensors()
            .iter()
            .map(|t| Tensor::zeros(t.shape()))
            .collect();
        self.accumulate(&mut out, 1.0);
        out
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(shape_err!("rank mismatch {a:?} vs {b:?}"));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(shape_err!("cannot broadcast {a:?} with {b:?}")),
        })
        .collect()
}

/// Offsets into each operand for every output element of a broadcast.
fn broadcast_offsets(a: &[usize], b: &[usize], out: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let n: usize = out.iter().product();
    let sa = strides(a);
    let sb = strides(b);
    let rank = out.len();
    let mut idx = vec![0usize; rank];
    let mut oa = Vec::with_capacity(n);
    let mut ob = Vec::with_capacity(n);
    for _ in 0..n {
        let mut pa = 0;
        let mut pb = 0;
        for d in 0..rank {
            if a[d] != 1 {
                pa += idx[d] * sa[d];
            }
            if b[d] != 1 {
                pb += idx[d] * sb[d];
            }
        }
        oa.push(pa);
        ob.push(pb);
        for d in (0..rank).rev() {
            idx[d] += 1;
            if idx[d] < out[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    (oa, ob)
}

pub(crate) fn conv1d_out_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || len + 2 * padding < kernel {
        return None;
    }
    Some((len + 2 * padding - kernel) / stride + 1)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a constant; backward does not propagate into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Records an input whose gradient should be available after backward.
    pub fn tracked_input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input, true)
    }

    /// Binds a stored parameter; repeated calls for the same id return the
    /// same node so gradients from every use accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.bound.get(id.0) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Param, true);
        if self.bound.len() <= id.0 {
            self.bound.resize(id.0 + 1, None);
        }
        self.bound[id.0] = Some(v);
        self.params.push((id, v));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err!("matmul {sa:?} x {sb:?}"));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(shape_err!("transpose needs rank 2, got {s:?}"));
        }
        let (r, c) = (s[0], s[1]);
        let out = transpose_raw(self.value(x).data(), r, c);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[c, r], out)?, Op::Transpose(x), rg))
    }

    fn binary(&mut self, op: BinOp, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape = broadcast_shape(ta.shape(), tb.shape())?;
        let f = |x: f64, y: f64| match op {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
        };
        let data = if ta.shape() == tb.shape() {
            ta.data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect()
        } else {
            let (oa, ob) = broadcast_offsets(ta.shape(), tb.shape(), &out_shape);
            oa.iter()
                .zip(&ob)
                .map(|(&i, &j)| f(ta.data()[i], tb.data()[j]))
                .collect()
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::new(&out_shape, data)?, Op::Binary(op, a, b), rg))
    }

    /// Elementwise sum with same-rank broadcasting over unit dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Sub, a, b)
    }

    /// Elementwise product with same-rank broadcasting over unit dimensions.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(BinOp::Mul, a, b)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|v| v * c).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, c), rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = *parts.first().ok_or(Error::Empty("concat operands"))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(shape_err!("concat axis {axis} on rank {}", base.len()));
        }
        let mut total = 0;
        for &p in parts {
            let s = self.shape(p);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (x, y))| d == axis || x == y);
            if !ok {
                return Err(shape_err!("concat {base:?} with {s:?} on axis {axis}"));
            }
            total += s[axis];
        }
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let (outer, _, inner) = axis_split(&out_shape, axis);
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            Tensor::new(&out_shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// `len` entries along `axis` starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(shape_err!("slice [{start}, {start}+{len}) on axis {axis} of {s:?}"));
        }
        let (outer, n, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * n * inner + start * inner;
            data.extend_from_slice(&src[base..base + len * inner]);
        }
        let mut out_shape = s;
        out_shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(
            Tensor::new(&out_shape, data)?,
            Op::Slice { x, axis, start },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(t.shape(), data).expect("same shape");
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x), sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), libm::tanh)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, Op::LogClamp { x, floor }, move |v| libm::log(v.max(floor)))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(shape_err!("softmax axis {axis} on {s:?}"));
        }
        let (outer, n, inner) = axis_split(&s, axis);
        let mut data = self.value(x).data().to_vec();
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| o * n * inner + j * inner + i;
                let mut mx = f64::NEG_INFINITY;
                for j in 0..n {
                    mx = mx.max(data[at(j)]);
                }
                let mut z = 0.0;
                for j in 0..n {
                    let e = libm::exp(data[at(j)] - mx);
                    data[at(j)] = e;
                    z += e;
                }
                for j in 0..n {
                    data[at(j)] /= z;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&s, data)?, Op::Softmax { x, axis }, rg))
    }

    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)` so the
    /// expected output equals the input. Outside training this is the
    /// identity and records nothing.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(alloc::format!(
                "dropout rate {rate} not in [0, 1)"
            )));
        }
        if !train || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(t.shape(), data)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// One-dimensional convolution of a `C × L` input with `C' × C × K`
    /// kernels, producing `C' × L'` where `L' = (L + 2p - K) / s + 1`.
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        if sx.len() != 2 || sw.len() != 3 || sx[0] != sw[1] {
            return Err(shape_err!("conv1d input {sx:?} with kernels {sw:?}"));
        }
        let (c_in, len) = (sx[0], sx[1]);
        let (c_out, k) = (sw[0], sw[2]);
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(shape_err!("conv1d bias {:?}, want [{c_out}]", self.shape(b)));
            }
        }
        let l_out = conv1d_out_len(len, k, stride, padding).ok_or_else(|| {
            Error::InvalidArgument(alloc::format!(
                "conv1d stride {stride} / padding {padding} invalid for length {len}, kernel {k}"
            ))
        })?;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; c_out * l_out];
        if let Some(b) = b {
            let bd = self.value(b).data();
            for o in 0..c_out {
                out[o * l_out..(o + 1) * l_out].fill(bd[o]);
            }
        }
        for o in 0..c_out {
            let orow = &mut out[o * l_out..(o + 1) * l_out];
            for c in 0..c_in {
                let xrow = &xd[c * len..(c + 1) * len];
                for kk in 0..k {
                    let wv = wd[(o * c_in + c) * k + kk];
                    if wv == 0.0 {
                        continue;
                    }
                    let (t0, t1) = conv_valid_range(len, l_out, stride, padding, kk);
                    for t in t0..t1 {
                        orow[t] += wv * xrow[t * stride + kk - padding];
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(
            Tensor::new(&[c_out, l_out], out)?,
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            },
            rg,
        ))
    }

    /// Maximum over `axis`; the axis is removed from the shape.
    pub fn max(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(shape_err!("max axis {axis} on {s:?}"));
        }
        let (outer, n, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(outer * inner);
        let mut argmax = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let mut best = o * n * inner + i;
                for j in 1..n {
                    let at = o * n * inner + j * inner + i;
                    if src[at] > src[best] {
                        best = at;
                    }
                }
                data.push(src[best]);
                argmax.push(best);
            }
        }
        let mut out_shape = s;
        out_shape.remove(axis);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&out_shape, data)?, Op::Max { x, argmax }, rg))
    }

    /// Max over the last axis, e.g. `C × L → C`.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        if rank == 0 {
            return Err(shape_err!("global_max_pool on a scalar"));
        }
        self.max(x, rank - 1)
    }

    /// Mean over `axis`; the axis is removed from the shape.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(shape_err!("mean axis {axis} on {s:?}"));
        }
        let (outer, n, inner) = axis_split(&s, axis);
        let src = self.value(x).data();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                for i in 0..inner {
                    data[o * inner + i] += src[o * n * inner + j * inner + i];
                }
            }
        }
        let inv = 1.0 / n as f64;
        data.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = s;
        out_shape.remove(axis);
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&out_shape, data)?, Op::Mean { x, axis }, rg))
    }

    /// Sum of all entries as a scalar.
    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    /// Which side of every non-smooth point the recorded forward pass took:
    /// ReLU input signs, max argmaxes and whether log inputs were clamped.
    /// Two passes with equal patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => out.extend(self.value(*x).data().iter().map(|&v| usize::from(v > 0.0))),
                Op::Max { argmax, .. } => out.extend_from_slice(argmax),
                Op::LogClamp { x, floor } => {
                    out.extend(self.value(*x).data().iter().map(|&v| usize::from(v < *floor)))
                }
                _ => {}
            }
        }
        out
    }

    /// Reverse-mode pass from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!("backward from non-scalar {:?}", self.shape(loss)));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = Some(g);
                continue;
            }
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.rg(*a) {
                    let bt = transpose_raw(self.value(*b).data(), k, n);
                    let da = matmul_raw(g, &bt, m, n, k);
                    add_into(accumulate(grads, *a, m * k), &da);
                }
                if self.rg(*b) {
                    let at = transpose_raw(self.value(*a).data(), m, k);
                    let db = matmul_raw(&at, g, k, m, n);
                    add_into(accumulate(grads, *b, k * n), &db);
                }
            }
            Op::Transpose(x) => {
                let s = node.value.shape();
                let back = transpose_raw(g, s[0], s[1]);
                add_into(accumulate(grads, *x, back.len()), &back);
            }
            Op::Binary(op, a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let same = ta.shape() == tb.shape();
                let (oa, ob) = if same {
                    ((0..g.len()).collect(), (0..g.len()).collect())
                } else {
                    broadcast_offsets(ta.shape(), tb.shape(), node.value.shape())
                };
                if self.rg(*a) {
                    let bd = tb.data();
                    let ga = accumulate(grads, *a, ta.len());
                    for (e, &gi) in g.iter().enumerate() {
                        ga[oa[e]] += match op {
                            BinOp::Add | BinOp::Sub => gi,
                            BinOp::Mul => gi * bd[ob[e]],
                        };
                    }
                }
                if self.rg(*b) {
                    let ad = ta.data();
                    let gb = accumulate(grads, *b, tb.len());
                    for (e, &gi) in g.iter().enumerate() {
                        gb[ob[e]] += match op {
                            BinOp::Add => gi,
                            BinOp::Sub => -gi,
                            BinOp::Mul => gi * ad[oa[e]],
                        };
                    }
                }
            }
            Op::Scale(x, c) => {
                let gx = accumulate(grads, *x, g.len());
                for (a, &gi) in gx.iter_mut().zip(g) {
                    *a += c * gi;
                }
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                for &p in parts {
                    let width = self.shape(p)[*axis];
                    if self.rg(p) {
                        let n = self.value(p).len();
                        let gp = accumulate(grads, p, n);
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            let dst = o * width * inner;
                            add_into(
                                &mut gp[dst..dst + width * inner],
                                &g[src..src + width * inner],
                            );
                        }
                    }
                    offset += width;
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = self.shape(*x);
                let (outer, n, inner) = axis_split(xs, *axis);
                let len = node.value.shape()[*axis];
                let gx = accumulate(grads, *x, outer * n * inner);
                for o in 0..outer {
                    let dst = o * n * inner + start * inner;
                    let src = o * len * inner;
                    add_into(&mut gx[dst..dst + len * inner], &g[src..src + len * inner]);
                }
            }
            Op::Reshape(x) => add_into(accumulate(grads, *x, g.len()), g),
            Op::Relu(x) => {
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                    if yi > 0.0 {
                        *a += gi;
                    }
                }
            }
            Op::Sigmoid(x) => {
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                    *a += gi * yi * (1.0 - yi);
                }
            }
            Op::Tanh(x) => {
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gi), &yi) in gx.iter_mut().zip(g).zip(y) {
                    *a += gi * (1.0 - yi * yi);
                }
            }
            Op::LogClamp { x, floor } => {
                let xd = self.value(*x).data();
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gi), &xi) in gx.iter_mut().zip(g).zip(xd) {
                    if xi > *floor {
                        *a += gi / xi;
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let (outer, n, inner) = axis_split(node.value.shape(), *axis);
                let gx = accumulate(grads, *x, g.len());
                for o in 0..outer {
                    for ii in 0..inner {
                        let at = |j: usize| o * n * inner + j * inner + ii;
                        let dot: f64 = (0..n).map(|j| g[at(j)] * y[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] += y[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let gx = accumulate(grads, *x, g.len());
                for ((a, &gi), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *a += gi * m;
                }
            }
            Op::Conv1d {
                x,
                w,
                b,
                stride,
                padding,
            } => self.conv1d_backward(i, g, *x, *w, *b, *stride, *padding, grads),
            Op::Max { x, argmax } => {
                let n = self.value(*x).len();
                let gx = accumulate(grads, *x, n);
                for (&at, &gi) in argmax.iter().zip(g) {
                    gx[at] += gi;
                }
            }
            Op::Mean { x, axis } => {
                let xs = self.shape(*x);
                let (outer, n, inner) = axis_split(xs, *axis);
                let inv = 1.0 / n as f64;
                let gx = accumulate(grads, *x, outer * n * inner);
                for o in 0..outer {
                    for j in 0..n {
                        for ii in 0..inner {
                            gx[o * n * inner + j * inner + ii] += inv * g[o * inner + ii];
                        }
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                let gx = accumulate(grads, *x, n);
                gx.iter_mut().for_each(|a| *a += g[0]);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        i: usize,
        g: &[f64],
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        padding: usize,
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let (c_in, len) = (sx[0], sx[1]);
        let (c_out, k) = (sw[0], sw[2]);
        let l_out = self.nodes[i].value.shape()[1];
        if let Some(b) = b.filter(|&b| self.rg(b)) {
            let gb = accumulate(grads, b, c_out);
            for o in 0..c_out {
                gb[o] += g[o * l_out..(o + 1) * l_out].iter().sum::<f64>();
            }
        }
        if self.rg(w) {
            let xd = self.value(x).data();
            let gw = accumulate(grads, w, c_out * c_in * k);
            for o in 0..c_out {
                let grow = &g[o * l_out..(o + 1) * l_out];
                for c in 0..c_in {
                    let xrow = &xd[c * len..(c + 1) * len];
                    for kk in 0..k {
                        let (t0, t1) = conv_valid_range(len, l_out, stride, padding, kk);
                        let mut acc = 0.0;
                        for t in t0..t1 {
                            acc += grow[t] * xrow[t * stride + kk - padding];
                        }
                        gw[(o * c_in + c) * k + kk] += acc;
                    }
                }
            }
        }
        if self.rg(x) {
            let wd = self.value(w).data();
            let gx = accumulate(grads, x, c_in * len);
            for o in 0..c_out {
                let grow = &g[o * l_out..(o + 1) * l_out];
                for c in 0..c_in {
                    let xrow = &mut gx[c * len..(c + 1) * len];
                    for kk in 0..k {
                        let wv = wd[(o * c_in + c) * k + kk];
                        let (t0, t1) = conv_valid_range(len, l_out, stride, padding, kk);
                        for t in t0..t1 {
                            xrow[t * stride + kk - padding] += wv * grow[t];
                        }
                    }
                }
            }
        }
    }
}

/// Output positions `t` for which `t * stride + kk - padding` lies in `[0, len)`.
fn conv_valid_range(len: usize, l_out: usize, stride: usize, padding: usize, kk: usize) -> (usize, usize) {
    let t0 = if kk >= padding {
        0
    } else {
        (padding - kk).div_ceil(stride)
    };
    // t * stride + kk - padding <= len - 1
    let lim = len + padding;
    let t1 = if lim <= kk {
        0
    } else {
        ((lim - kk - 1) / stride + 1).min(l_out)
    };
    (t0.min(t1), t1)
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
