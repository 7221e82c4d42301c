//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its variables together with
//! whatever the backward pass needs. Parameters are borrowed from a
//! [`ParamStore`] rather than copied, so a graph is cheap to build per batch
//! and is dropped after [`Graph::backward`].
//!
//! All tensors handled here are matrices (`rows x cols`) except bias and
//! normalization vectors, which are rank-1 and broadcast over rows.

use std::collections::HashMap;

use super::param::{Gradients, ParamId, ParamStore};
use super::tensor::{self, gelu_grad_scalar, gelu_scalar, gemm, sigmoid_scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GatherRows {
        src: Var,
        ids: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        causal: bool,
        probs: Vec<f64>,
    },
    PrefixMean {
        x: Var,
        seq_len: usize,
    },
    SoftmaxRows(Var),
    ScaleRowsByCol {
        x: Var,
        g: Var,
        col: usize,
    },
    StackSteps(Vec<Var>),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::new(vec![rows, cols], data).expect("internal shape")
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => self.store.value(id),
            _ => node.value.as_ref().expect("non-param node has a value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Some(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Input,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter; repeated calls return the same variable.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    /// `x [m x n] + bias [n]` broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let n = xv.cols();
        if bv.len() != n || xv.shape().len() != 2 {
            return Err(mismatch("add_bias", xv, bv));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias), &[x, bias]))
    }

    /// `x * w + b` for `w [in x out]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = self.param(w);
        let b = self.param(b);
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(av.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a).map(|x| x * factor);
        self.push(out, Op::Scale(a, factor), &[a])
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(gelu_scalar);
        self.push(out, Op::Gelu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid_scalar);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn layer_norm(&mut self, x: Var, gamma: ParamId, beta: ParamId) -> Result<Var> {
        let gamma = self.param(gamma);
        let beta = self.param(beta);
        let (xv, gv, bv) = (self.value(x), self.value(gamma), self.value(beta));
        let d = xv.cols();
        if gv.len() != d || bv.len() != d {
            return Err(mismatch("layer_norm", xv, gv));
        }
        let rows = xv.rows();
        let mut xhat = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = xv.row(r);
            let (mean, inv) = tensor::row_moments(row, tensor::LAYER_NORM_EPS);
            inv_std[r] = inv;
            for j in 0..d {
                let h = (row[j] - mean) * inv;
                xhat[r * d + j] = h;
                out[r * d + j] = h * gv.data()[j] + bv.data()[j];
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
            &[x, gamma, beta],
        ))
    }

    /// Selects rows of a matrix; ids may repeat.
    pub fn gather_rows(&mut self, src: Var, ids: &[usize]) -> Result<Var> {
        let sv = self.value(src);
        let (rows, cols) = (sv.rows(), sv.cols());
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &i in ids {
            if i >= rows {
                return Err(Error::OutOfRange {
                    what: "row",
                    index: i,
                    size: rows,
                });
            }
            data.extend_from_slice(sv.row(i));
        }
        let out = matrix(ids.len(), cols, data);
        Ok(self.push(
            out,
            Op::GatherRows {
                src,
                ids: ids.to_vec(),
            },
            &[src],
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.cols();
        if start + len > cols {
            return Err(Error::OutOfRange {
                what: "column",
                index: start + len,
                size: cols,
            });
        }
        let rows = xv.rows();
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let out = matrix(rows, len, data);
        Ok(self.push(out, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let pv = self.value(p);
            if pv.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), pv));
            }
            total += pv.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = matrix(rows, total, data);
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Multi-head scaled dot-product attention over independent blocks of
    /// `seq_len` consecutive rows. With `causal`, row `i` of a block attends
    /// only to rows `0..=i` of the same block.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        seq_len: usize,
        causal: bool,
    ) -> Result<Var> {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        if qv.shape() != kv.shape() || qv.shape() != vv.shape() {
            return Err(mismatch("attention", qv, kv));
        }
        let (rows, d) = (qv.rows(), qv.cols());
        if heads == 0 || d % heads != 0 {
            return Err(Error::invalid(format!("width {d} not divisible into {heads} heads")));
        }
        if seq_len == 0 || rows % seq_len != 0 {
            return Err(Error::invalid(format!("{rows} rows not a multiple of seq_len {seq_len}")));
        }
        let t = seq_len;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let blocks = rows / t;
        let (qd, kd, vd) = (qv.data(), kv.data(), vv.data());
        let mut probs = vec![0.0; blocks * heads * t * t];
        let mut out = vec![0.0; rows * d];
        let mut scores = vec![0.0; t];
        for b in 0..blocks {
            for h in 0..heads {
                let off = h * dh;
                for i in 0..t {
                    let qi = &qd[(b * t + i) * d + off..(b * t + i) * d + off + dh];
                    let upto = if causal { i + 1 } else { t };
                    let mut max = f64::NEG_INFINITY;
                    for (j, s) in scores.iter_mut().enumerate().take(upto) {
                        let kj = &kd[(b * t + j) * d + off..(b * t + j) * d + off + dh];
                        *s = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * scale;
                        max = max.max(*s);
                    }
                    let mut z = 0.0;
                    for s in scores.iter_mut().take(upto) {
                        *s = (*s - max).exp();
                        z += *s;
                    }
                    let pbase = ((b * heads + h) * t + i) * t;
                    let orow = &mut out[(b * t + i) * d + off..(b * t + i) * d + off + dh];
                    for j in 0..upto {
                        let p = scores[j] / z;
                        probs[pbase + j] = p;
                        let vj = &vd[(b * t + j) * d + off..(b * t + j) * d + off + dh];
                        for (o, x) in orow.iter_mut().zip(vj) {
                            *o += p * x;
                        }
                    }
                }
            }
        }
        let out = matrix(rows, d, out);
        Ok(self.push(
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                seq_len,
                causal,
                probs,
            },
            &[q, k, v],
        ))
    }

    /// Row `(b, t)` of the output is the mean of rows `(b, 0..=t)` of `x`,
    /// where rows are grouped in blocks of `seq_len`.
    pub fn prefix_mean(&mut self, x: Var, seq_len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, d) = (xv.rows(), xv.cols());
        if seq_len == 0 || rows % seq_len != 0 {
            return Err(Error::invalid(format!("{rows} rows not a multiple of seq_len {seq_len}")));
        }
        let mut out = vec![0.0; rows * d];
        let mut acc = vec![0.0; d];
        for b in 0..rows / seq_len {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for t in 0..seq_len {
                let r = b * seq_len + t;
                let inv = 1.0 / (t + 1) as f64;
                for j in 0..d {
                    acc[j] += xv.data()[r * d + j];
                    out[r * d + j] = acc[j] * inv;
                }
            }
        }
        let out = matrix(rows, d, out);
        Ok(self.push(out, Op::PrefixMean { x, seq_len }, &[x]))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let d = xv.cols();
        let mut out = xv.data().to_vec();
        for row in out.chunks_mut(d) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        let out = Tensor::new(xv.shape().to_vec(), out).expect("same shape");
        self.push(out, Op::SoftmaxRows(x), &[x])
    }

    /// Multiplies each row `r` of `x` by the scalar `g[r, col]`.
    pub fn scale_rows_by_col(&mut self, x: Var, g: Var, col: usize) -> Result<Var> {
        let (xv, gv) = (self.value(x), self.value(g));
        if xv.rows() != gv.rows() || col >= gv.cols() {
            return Err(mismatch("scale_rows_by_col", xv, gv));
        }
        let d = xv.cols();
        let gc = gv.cols();
        let mut out = xv.data().to_vec();
        for (r, row) in out.chunks_mut(d).enumerate() {
            let w = gv.data()[r * gc + col];
            row.iter_mut().for_each(|v| *v *= w);
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(out, Op::ScaleRowsByCol { x, g, col }, &[x, g]))
    }

    /// Interleaves per-step matrices `[batch x w]` into `[batch * steps x w]`
    /// with output row `b * steps + t` taken from `steps[t]` row `b`.
    pub fn stack_steps(&mut self, steps: &[Var]) -> Result<Var> {
        let first = self.value(steps[0]);
        let (batch, w) = (first.rows(), first.cols());
        let t = steps.len();
        for &s in steps {
            let sv = self.value(s);
            if sv.rows() != batch || sv.cols() != w {
                return Err(mismatch("stack_steps", first, sv));
            }
        }
        let mut out = vec![0.0; batch * t * w];
        for (ti, &s) in steps.iter().enumerate() {
            let sv = self.value(s);
            for b in 0..batch {
                let r = b * t + ti;
                out[r * w..(r + 1) * w].copy_from_slice(sv.row(b));
            }
        }
        let out = matrix(batch * t, w, out);
        Ok(self.push(out, Op::StackSteps(steps.to_vec()), steps))
    }

    /// Mean cross-entropy of row-wise softmax against class targets.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logits);
        let loss = tensor::cross_entropy(lv, targets)?;
        let c = lv.cols();
        let mut probs = lv.data().to_vec();
        for row in probs.chunks_mut(c) {
            let lse = tensor::log_sum_exp(row);
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// Back-propagates from the scalar `loss` and returns parameter gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        let mut out = Gradients::empty(self.store.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => out.add_owned(*id, g),
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    if self.nodes[a.0].needs_grad {
                        let ga = self.grad_slot(&mut grads, *a);
                        gemm(m, n, k, g.data(), false, bv.data(), true, ga, true);
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = self.grad_slot(&mut grads, *b);
                        gemm(k, m, n, av.data(), true, g.data(), false, gb, true);
                    }
                }
                Op::AddBias(x, b) => {
                    let n = g.cols();
                    self.accumulate(&mut grads, *x, g.data());
                    if self.nodes[b.0].needs_grad {
                        let gb = self.grad_slot(&mut grads, *b);
                        for row in g.data().chunks(n) {
                            for (a, v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, g.data());
                    self.accumulate(&mut grads, *b, g.data());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    if self.nodes[a.0].needs_grad {
                        let d: Vec<f64> = g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect();
                        self.accumulate(&mut grads, *a, &d);
                    }
                    if self.nodes[b.0].needs_grad {
                        let d: Vec<f64> = g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect();
                        self.accumulate(&mut grads, *b, &d);
                    }
                }
                Op::Scale(a, f) => {
                    let d: Vec<f64> = g.data().iter().map(|x| x * f).collect();
                    self.accumulate(&mut grads, *a, &d);
                }
                Op::Gelu(a) => {
                    let av = self.value(*a);
                    let d: Vec<f64> = g
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(gy, x)| gy * gelu_grad_scalar(*x))
                        .collect();
                    self.accumulate(&mut grads, *a, &d);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    let d: Vec<f64> = g.data().iter().zip(y.data()).map(|(gy, s)| gy * s * (1.0 - s)).collect();
                    self.accumulate(&mut grads, *a, &d);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let d: Vec<f64> = g.data().iter().zip(y.data()).map(|(gy, t)| gy * (1.0 - t * t)).collect();
                    self.accumulate(&mut grads, *a, &d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let d = g.cols();
                    let gv = self.value(*gamma).data().to_vec();
                    if self.nodes[gamma.0].needs_grad {
                        let gg = self.grad_slot(&mut grads, *gamma);
                        for (row_g, row_h) in g.data().chunks(d).zip(xhat.chunks(d)) {
                            for j in 0..d {
                                gg[j] += row_g[j] * row_h[j];
                            }
                        }
                    }
                    if self.nodes[beta.0].needs_grad {
                        let gb = self.grad_slot(&mut grads, *beta);
                        for row_g in g.data().chunks(d) {
                            for j in 0..d {
                                gb[j] += row_g[j];
                            }
                        }
                    }
                    if self.nodes[x.0].needs_grad {
                        let n = d as f64;
                        let mut dx = vec![0.0; g.len()];
                        for (r, (row_g, row_h)) in g.data().chunks(d).zip(xhat.chunks(d)).enumerate() {
                            let mut sum_dh = 0.0;
                            let mut sum_dh_h = 0.0;
                            for j in 0..d {
                                let dh = row_g[j] * gv[j];
                                sum_dh += dh;
                                sum_dh_h += dh * row_h[j];
                            }
                            let inv = inv_std[r];
                            for j in 0..d {
                                let dh = row_g[j] * gv[j];
                                dx[r * d + j] = inv / n * (n * dh - sum_dh - row_h[j] * sum_dh_h);
                            }
                        }
                        self.accumulate(&mut grads, *x, &dx);
                    }
                }
                Op::GatherRows { src, ids } => {
                    let cols = g.cols();
                    let gs = self.grad_slot(&mut grads, *src);
                    for (r, &i) in ids.iter().enumerate() {
                        for j in 0..cols {
                            gs[i * cols + j] += g.data()[r * cols + j];
                        }
                    }
                }
                Op::SliceCols { x, start } => {
                    let len = g.cols();
                    let cols = self.value(*x).cols();
                    let gx = self.grad_slot(&mut grads, *x);
                    for (r, row) in g.data().chunks(len).enumerate() {
                        for j in 0..len {
                            gx[r * cols + start + j] += row[j];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let total = g.cols();
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        if self.nodes[p.0].needs_grad {
                            let gp = self.grad_slot(&mut grads, p);
                            for (r, row) in g.data().chunks(total).enumerate() {
                                for j in 0..w {
                                    gp[r * w + j] += row[off + j];
                                }
                            }
                        }
                        off += w;
                    }
                }
                Op::Attention {
                    q,
                    k,
                    v,
                    heads,
                    seq_len,
                    causal,
                    probs,
                } => {
                    let (dq, dk, dv) = attention_backward(
                        self.value(*q),
                        self.value(*k),
                        self.value(*v),
                        &g,
                        *heads,
                        *seq_len,
                        *causal,
                        probs,
                    );
                    self.accumulate(&mut grads, *q, &dq);
                    self.accumulate(&mut grads, *k, &dk);
                    self.accumulate(&mut grads, *v, &dv);
                }
                Op::PrefixMean { x, seq_len } => {
                    let d = g.cols();
                    let rows = g.rows();
                    let mut dx = vec![0.0; rows * d];
                    let mut acc = vec![0.0; d];
                    for b in 0..rows / seq_len {
                        acc.iter_mut().for_each(|a| *a = 0.0);
                        for t in (0..*seq_len).rev() {
                            let r = b * seq_len + t;
                            let inv = 1.0 / (t + 1) as f64;
                            for j in 0..d {
                                acc[j] += g.data()[r * d + j] * inv;
                                dx[r * d + j] = acc[j];
                            }
                        }
                    }
                    self.accumulate(&mut grads, *x, &dx);
                }
                Op::SoftmaxRows(x) => {
                    let y = node.value.as_ref().unwrap();
                    let d = y.cols();
                    let mut dx = vec![0.0; y.len()];
                    for (r, (gy, yy)) in g.data().chunks(d).zip(y.data().chunks(d)).enumerate() {
                        let dot: f64 = gy.iter().zip(yy).map(|(a, b)| a * b).sum();
                        for j in 0..d {
                            dx[r * d + j] = yy[j] * (gy[j] - dot);
                        }
                    }
                    self.accumulate(&mut grads, *x, &dx);
                }
                Op::ScaleRowsByCol { x, g: gate, col } => {
                    let (xv, gv) = (self.value(*x), self.value(*gate));
                    let d = xv.cols();
                    let gc = gv.cols();
                    if self.nodes[x.0].needs_grad {
                        let mut dx = g.data().to_vec();
                        for (r, row) in dx.chunks_mut(d).enumerate() {
                            let w = gv.data()[r * gc + col];
                            row.iter_mut().for_each(|v| *v *= w);
                        }
                        self.accumulate(&mut grads, *x, &dx);
                    }
                    if self.nodes[gate.0].needs_grad {
                        let gg = self.grad_slot(&mut grads, *gate);
                        for (r, (gy, xr)) in g.data().chunks(d).zip(xv.data().chunks(d)).enumerate() {
                            gg[r * gc + col] += gy.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                Op::StackSteps(steps) => {
                    let t = steps.len();
                    let w = g.cols();
                    for (ti, &s) in steps.iter().enumerate() {
                        if !self.nodes[s.0].needs_grad {
                            continue;
                        }
                        let gs = self.grad_slot(&mut grads, s);
                        let batch = gs.len() / w;
                        for b in 0..batch {
                            let r = b * t + ti;
                            for j in 0..w {
                                gs[b * w + j] += g.data()[r * w + j];
                            }
                        }
                    }
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let c = self.value(*logits).cols();
                    let m = targets.len() as f64;
                    let scale = g.data()[0] / m;
                    let mut d = probs.clone();
                    for (r, &y) in targets.iter().enumerate() {
                        d[r * c + y] -= 1.0;
                    }
                    d.iter_mut().for_each(|v| *v *= scale);
                    self.accumulate(&mut grads, *logits, &d);
                }
                Op::Sum(x) => {
                    let n = self.value(*x).len();
                    let d = vec![g.data()[0]; n];
                    self.accumulate(&mut grads, *x, &d);
                }
            }
        }
        Ok(out)
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut [f64] {
        grads[v.0]
            .get_or_insert_with(|| Tensor::zeros(self.value(v).shape()))
            .data_mut()
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, d: &[f64]) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        let slot = self.grad_slot(grads, v);
        for (a, b) in slot.iter_mut().zip(d) {
            *a += b;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    g: &Tensor,
    heads: usize,
    t: usize,
    causal: bool,
    probs: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (rows, d) = (q.rows(), q.cols());
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), g.data());
    let mut dq = vec![0.0; rows * d];
    let mut dk = vec![0.0; rows * d];
    let mut dv = vec![0.0; rows * d];
    let mut dp = vec![0.0; t];
    for b in 0..rows / t {
        for h in 0..heads {
            let off = h * dh;
            for i in 0..t {
                let upto = if causal { i + 1 } else { t };
                let pbase = ((b * heads + h) * t + i) * t;
                let ri = (b * t + i) * d + off;
                let gi = &gd[ri..ri + dh];
                let mut dot = 0.0;
                for j in 0..upto {
                    let rj = (b * t + j) * d + off;
                    let p = probs[pbase + j];
                    let vj = &vd[rj..rj + dh];
                    dp[j] = gi.iter().zip(vj).map(|(x, y)| x * y).sum();
                    dot += p * dp[j];
                    for c in 0..dh {
                        dv[rj + c] += p * gi[c];
                    }
                }
                for j in 0..upto {
                    let rj = (b * t + j) * d + off;
                    let ds = probs[pbase + j] * (dp[j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        dq[ri + c] += ds * kd[rj + c];
                        dk[rj + c] += ds * qd[ri + c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}
