//! Tape-based reverse-mode differentiation over [`Tensor`] values.
//!
//! A [`Graph`] records every operation in creation order, so the tape is a
//! topological order by construction and [`Graph::backward`] walks it once in
//! reverse. Tensors are treated as 2-D (`rows × cols`); 1-D tensors behave as a
//! single row. Broadcasting is limited to [`Graph::add_bias`].

use std::borrow::Cow;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Sentinel used in place of negative infinity for masked softmax inputs.
pub const MASK_SENTINEL: f64 = -1e30;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Log(Var),
    Softmax {
        input: Var,
        axis: usize,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    GatherRows {
        table: Var,
        ids: Vec<usize>,
    },
    LayerNorm {
        input: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    requires_grad: bool,
    param: Option<usize>,
}

/// Reverse-mode tape. Leaves may borrow parameter tensors for the lifetime `'a`.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
    checked: bool,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            checked: false,
        }
    }

    /// A graph that rejects non-finite results after every operation.
    pub fn checked() -> Self {
        Self {
            nodes: Vec::new(),
            checked: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Trainable leaf tagged with a parameter slot.
    pub fn param(&mut self, value: &'a Tensor, slot: usize) -> Var {
        self.push_leaf(Cow::Borrowed(value), true, Some(slot))
    }

    /// Differentiable leaf owning its value.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), true, None)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(Cow::Owned(value), false, None)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor) -> Var {
        self.push_leaf(Cow::Borrowed(value), false, None)
    }

    fn push_leaf(
        &mut self,
        value: Cow<'a, Tensor>,
        requires_grad: bool,
        param: Option<usize>,
    ) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            param,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(
        &mut self,
        op_name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> Result<Var> {
        if self.checked && !value.is_finite() {
            return Err(Error::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value: Cow::Owned(value),
            op,
            requires_grad,
            param: None,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn unary(&mut self, name: &'static str, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::from_raw(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect());
        self.push(name, out, op, &[x])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::from_raw(ta.shape().to_vec(), data);
        self.push("add", out, Op::Add(a, b), &[a, b])
    }

    /// Adds a bias row (`1 × cols` or `cols`) to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (rows, cols) = self.value(x).dims2();
        if self.value(bias).len() != cols {
            return Err(Error::Shape {
                op: "add_bias",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let (tx, tb) = (self.value(x), self.value(bias));
        let mut data = tx.data().to_vec();
        for r in 0..rows {
            for (v, b) in data[r * cols..(r + 1) * cols].iter_mut().zip(tb.data()) {
                *v += b;
            }
        }
        let out = Tensor::from_raw(tx.shape().to_vec(), data);
        self.push("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_raw(ta.shape().to_vec(), data);
        self.push("mul", out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Result<Var> {
        self.unary("scale", x, |v| v * k, Op::Scale(x, k))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::Shape {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut out, 0.0);
        self.push(
            "matmul",
            Tensor::from_raw(vec![m, n], out),
            Op::MatMul(a, b),
            &[a, b],
        )
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.data()[i * c + j];
            }
        }
        self.push(
            "transpose",
            Tensor::from_raw(vec![c, r], out),
            Op::Transpose(x),
            &[x],
        )
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary("tanh", x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary("sigmoid", x, sigmoid, Op::Sigmoid(x))
    }

    /// Rectifier with subgradient 0 at the origin.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary("relu", x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        let out = self.unary("log", x, f64::ln, Op::Log(x))?;
        if !self.value(out).is_finite() {
            return Err(Error::NonFinite { op: "log" });
        }
        Ok(out)
    }

    /// Softmax along `axis` (0 = down columns, 1 = along rows) of a 2-D tensor.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.softmax_impl(x, axis, None)
    }

    /// Softmax with `mask[j] == false` positions along `axis` forced to zero weight.
    pub fn masked_softmax(&mut self, x: Var, axis: usize, mask: &[bool]) -> Result<Var> {
        self.softmax_impl(x, axis, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.dims2();
        if axis > 1 {
            return Err(Error::invalid(format!("softmax axis {axis} out of range")));
        }
        let axis_len = if axis == 1 { cols } else { rows };
        if let Some(m) = mask {
            if m.len() != axis_len {
                return Err(Error::Shape {
                    op: "softmax",
                    lhs: t.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
            if !m.iter().any(|&b| b) {
                return Err(Error::AllMasked { op: "softmax" });
            }
        }
        if axis_len == 0 {
            return Err(Error::AllMasked { op: "softmax" });
        }
        let mut out = t.data().to_vec();
        let (lanes, stride_lane, stride_elem) = if axis == 1 {
            (rows, cols, 1)
        } else {
            (cols, 1, cols)
        };
        let mut buf = vec![0.0; axis_len];
        for lane in 0..lanes {
            let base = lane * stride_lane;
            for (j, b) in buf.iter_mut().enumerate() {
                let masked = mask.is_some_and(|m| !m[j]);
                *b = if masked {
                    MASK_SENTINEL
                } else {
                    out[base + j * stride_elem]
                };
            }
            softmax_in_place(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                out[base + j * stride_elem] = *b;
            }
        }
        let shape = t.shape().to_vec();
        self.push(
            "softmax",
            Tensor::from_raw(shape, out),
            Op::Softmax { input: x, axis },
            &[x],
        )
    }

    /// Concatenates 2-D tensors along `axis`.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() {
            return Err(Error::invalid("concat of zero tensors"));
        }
        let dims: Vec<(usize, usize)> = inputs.iter().map(|&v| self.value(v).dims2()).collect();
        let (r0, c0) = dims[0];
        for (v, &(r, c)) in inputs.iter().zip(&dims) {
            let ok = if axis == 0 { c == c0 } else { r == r0 };
            if !ok || axis > 1 {
                return Err(Error::Shape {
                    op: "concat",
                    lhs: self.shape(inputs[0]).to_vec(),
                    rhs: self.shape(*v).to_vec(),
                });
            }
        }
        let (shape, data) = if axis == 0 {
            let rows: usize = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * c0);
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            (vec![rows, c0], data)
        } else {
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(r0 * cols);
            for r in 0..r0 {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row_slice(r));
                }
            }
            (vec![r0, cols], data)
        };
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        };
        self.push("concat", Tensor::from_raw(shape, data), op, inputs)
    }

    /// Takes `len` rows (`axis == 0`) or columns (`axis == 1`) starting at `start`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = t.dims2();
        let extent = if axis == 0 { r } else { c };
        if axis > 1 || start + len > extent {
            return Err(Error::Shape {
                op: "slice",
                lhs: t.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let (shape, data) = if axis == 0 {
            (
                vec![len, c],
                t.data()[start * c..(start + len) * c].to_vec(),
            )
        } else {
            let mut data = Vec::with_capacity(r * len);
            for i in 0..r {
                data.extend_from_slice(&t.row_slice(i)[start..start + len]);
            }
            (vec![r, len], data)
        };
        self.push(
            "slice",
            Tensor::from_raw(shape, data),
            Op::Slice {
                input: x,
                axis,
                start,
            },
            &[x],
        )
    }

    /// Sum of all entries as a `1 × 1` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push(
            "sum",
            Tensor::from_raw(vec![1, 1], vec![s]),
            Op::Sum(x),
            &[x],
        )
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(
            "mean",
            Tensor::from_raw(vec![1, 1], vec![s]),
            Op::Mean(x),
            &[x],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.len() {
            return Err(Error::Shape {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let out = Tensor::from_raw(shape.to_vec(), t.data().to_vec());
        self.push("reshape", out, Op::Reshape(x), &[x])
    }

    /// Row lookup: output row `i` is `table[ids[i]]`. Equivalent to a one-hot
    /// matrix times `table`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (r, c) = t.dims2();
        if let Some(&bad) = ids.iter().find(|&&i| i >= r) {
            return Err(Error::Shape {
                op: "gather_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![bad],
            });
        }
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in ids {
            data.extend_from_slice(t.row_slice(i));
        }
        let op = Op::GatherRows {
            table,
            ids: ids.to_vec(),
        };
        self.push(
            "gather_rows",
            Tensor::from_raw(vec![ids.len(), c], data),
            op,
            &[table],
        )
    }

    /// Per-row layer normalization followed by an affine map.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let t = self.value(x);
        let (rows, cols) = t.dims2();
        if self.value(gain).len() != cols || self.value(bias).len() != cols {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: t.shape().to_vec(),
                rhs: self.shape(gain).to_vec(),
            });
        }
        let (g, b) = (self.value(gain).data(), self.value(bias).data());
        let mut normalized = vec![0.0; rows * cols];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = t.row_slice(r);
            let mu = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..cols {
                let n = (row[j] - mu) * is;
                normalized[r * cols + j] = n;
                out[r * cols + j] = n * g[j] + b[j];
            }
        }
        let shape = t.shape().to_vec();
        let op = Op::LayerNorm {
            input: x,
            gain,
            bias,
            normalized,
            inv_std,
        };
        self.push(
            "layer_norm",
            Tensor::from_raw(shape, out),
            op,
            &[x, gain, bias],
        )
    }

    /// `−log softmax(logits)[target]` for a single row of logits, via log-sum-exp.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        if t.dims2().0 != 1 || target >= t.len() {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: t.shape().to_vec(),
                rhs: vec![target],
            });
        }
        let x = t.data();
        let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let probs = x.iter().map(|v| (v - lse).exp()).collect();
        let loss = lse - x[target];
        let op = Op::CrossEntropy {
            logits,
            target,
            probs,
        };
        self.push(
            "cross_entropy",
            Tensor::from_raw(vec![1, 1], vec![loss]),
            op,
            &[logits],
        )
    }

    /// Propagates d`loss`/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        let params = self.nodes[..=loss.0]
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.param.map(|slot| (slot, i)))
            .collect();
        Ok(Gradients {
            shapes: self.nodes[..=loss.0]
                .iter()
                .map(|n| n.value.shape().to_vec())
                .collect(),
            grads,
            params,
        })
    }

    fn propagate(&self, node: &Node<'a>, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let val = |v: Var| self.nodes[v.0].value.as_ref();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let out = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if wants(v) {
                        accumulate(grads, v, g.len(), |acc| add_into(acc, g));
                    }
                }
            }
            Op::AddBias(x, bias) => {
                if wants(*x) {
                    accumulate(grads, *x, g.len(), |acc| add_into(acc, g));
                }
                if wants(*bias) {
                    let cols = val(*bias).len();
                    accumulate(grads, *bias, cols, |acc| {
                        for row in g.chunks(cols) {
                            add_into(acc, row);
                        }
                    });
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a).data(), val(*b).data());
                if wants(*a) {
                    accumulate(grads, *a, g.len(), |acc| {
                        for ((s, gi), y) in acc.iter_mut().zip(g).zip(tb) {
                            *s += gi * y;
                        }
                    });
                }
                if wants(*b) {
                    accumulate(grads, *b, g.len(), |acc| {
                        for ((s, gi), x) in acc.iter_mut().zip(g).zip(ta) {
                            *s += gi * x;
                        }
                    });
                }
            }
            Op::Scale(x, k) => {
                accumulate(grads, *x, g.len(), |acc| {
                    for (s, gi) in acc.iter_mut().zip(g) {
                        *s += gi * k;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if wants(*a) {
                    accumulate(grads, *a, m * k, |acc| {
                        gemm(m, n, k, g, false, tb.data(), true, acc, 1.0)
                    });
                }
                if wants(*b) {
                    accumulate(grads, *b, k * n, |acc| {
                        gemm(k, m, n, ta.data(), true, g, false, acc, 1.0)
                    });
                }
            }
            Op::Transpose(x) => {
                let (r, c) = val(*x).dims2();
                accumulate(grads, *x, r * c, |acc| {
                    for i in 0..r {
                        for j in 0..c {
                            acc[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Op::Tanh(x) => accumulate(grads, *x, g.len(), |acc| {
                for ((s, gi), y) in acc.iter_mut().zip(g).zip(out) {
                    *s += gi * (1.0 - y * y);
                }
            }),
            Op::Sigmoid(x) => accumulate(grads, *x, g.len(), |acc| {
                for ((s, gi), y) in acc.iter_mut().zip(g).zip(out) {
                    *s += gi * y * (1.0 - y);
                }
            }),
            Op::Relu(x) => {
                let xin = val(*x).data();
                accumulate(grads, *x, g.len(), |acc| {
                    for ((s, gi), xv) in acc.iter_mut().zip(g).zip(xin) {
                        if *xv > 0.0 {
                            *s += gi;
                        }
                    }
                });
            }
            Op::Log(x) => {
                let xin = val(*x).data();
                accumulate(grads, *x, g.len(), |acc| {
                    for ((s, gi), xv) in acc.iter_mut().zip(g).zip(xin) {
                        *s += gi / xv;
                    }
                });
            }
            Op::Softmax { input, axis } => {
                let (rows, cols) = node.value.dims2();
                let (lanes, stride_lane, stride_elem, len) = if *axis == 1 {
                    (rows, cols, 1, cols)
                } else {
                    (cols, 1, cols, rows)
                };
                accumulate(grads, *input, g.len(), |acc| {
                    for lane in 0..lanes {
                        let base = lane * stride_lane;
                        let dot: f64 = (0..len)
                            .map(|j| g[base + j * stride_elem] * out[base + j * stride_elem])
                            .sum();
                        for j in 0..len {
                            let idx = base + j * stride_elem;
                            acc[idx] += out[idx] * (g[idx] - dot);
                        }
                    }
                });
            }
            Op::Concat { inputs, axis } => {
                let (_, total_cols) = node.value.dims2();
                let mut offset = 0;
                for &v in inputs {
                    let (r, c) = val(v).dims2();
                    if wants(v) {
                        accumulate(grads, v, r * c, |acc| {
                            if *axis == 0 {
                                add_into(acc, &g[offset * c..(offset + r) * c]);
                            } else {
                                for i in 0..r {
                                    let src =
                                        &g[i * total_cols + offset..i * total_cols + offset + c];
                                    add_into(&mut acc[i * c..(i + 1) * c], src);
                                }
                            }
                        });
                    }
                    offset += if *axis == 0 { r } else { c };
                }
            }
            Op::Slice { input, axis, start } => {
                let (r, c) = val(*input).dims2();
                let (_, oc) = node.value.dims2();
                accumulate(grads, *input, r * c, |acc| {
                    if *axis == 0 {
                        add_into(&mut acc[start * c..start * c + g.len()], g);
                    } else {
                        for i in 0..r {
                            add_into(
                                &mut acc[i * c + start..i * c + start + oc],
                                &g[i * oc..(i + 1) * oc],
                            );
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let n = val(*x).len();
                accumulate(grads, *x, n, |acc| acc.iter_mut().for_each(|s| *s += g[0]));
            }
            Op::Mean(x) => {
                let n = val(*x).len();
                let share = g[0] / n as f64;
                accumulate(grads, *x, n, |acc| acc.iter_mut().for_each(|s| *s += share));
            }
            Op::Reshape(x) => accumulate(grads, *x, g.len(), |acc| add_into(acc, g)),
            Op::GatherRows { table, ids } => {
                let (r, c) = val(*table).dims2();
                accumulate(grads, *table, r * c, |acc| {
                    for (k, &id) in ids.iter().enumerate() {
                        add_into(&mut acc[id * c..(id + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let (rows, cols) = node.value.dims2();
                let gv = val(*gain).data();
                if wants(*input) {
                    accumulate(grads, *input, rows * cols, |acc| {
                        let mut dxhat = vec![0.0; cols];
                        for r in 0..rows {
                            let base = r * cols;
                            for j in 0..cols {
                                dxhat[j] = g[base + j] * gv[j];
                            }
                            let sum_d: f64 = dxhat.iter().sum();
                            let sum_dx: f64 =
                                (0..cols).map(|j| dxhat[j] * normalized[base + j]).sum();
                            let n = cols as f64;
                            for j in 0..cols {
                                acc[base + j] += inv_std[r] / n
                                    * (n * dxhat[j] - sum_d - normalized[base + j] * sum_dx);
                            }
                        }
                    });
                }
                if wants(*gain) {
                    accumulate(grads, *gain, cols, |acc| {
                        for r in 0..rows {
                            for j in 0..cols {
                                acc[j] += g[r * cols + j] * normalized[r * cols + j];
                            }
                        }
                    });
                }
                if wants(*bias) {
                    accumulate(grads, *bias, cols, |acc| {
                        for row in g.chunks(cols) {
                            add_into(acc, row);
                        }
                    });
                }
            }
            Op::CrossEntropy {
                logits,
                target,
                probs,
            } => {
                accumulate(grads, *logits, probs.len(), |acc| {
                    for (j, (s, p)) in acc.iter_mut().zip(probs).enumerate() {
                        let y = if j == *target { 1.0 } else { 0.0 };
                        *s += g[0] * (p - y);
                    }
                });
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    shapes: Vec<Vec<usize>>,
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<Tensor> {
        let g = self.grads.get(v.0)?.as_ref()?;
        Some(Tensor::from_raw(self.shapes[v.0].clone(), g.clone()))
    }

    /// Gradient with respect to `v`, zeros when it does not influence the loss.
    pub fn get_or_zeros(&self, v: Var) -> Tensor {
        self.get(v)
            .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]))
    }

    /// Moves out the gradients of tagged parameter leaves, indexed by slot.
    pub fn into_param_grads(mut self, slots: usize) -> Vec<Option<Vec<f64>>> {
        let mut out = vec![None; slots];
        for (slot, node) in std::mem::take(&mut self.params) {
            if slot < slots {
                if let Some(g) = self.grads[node].take() {
                    match &mut out[slot] {
                        None => out[slot] = Some(g),
                        Some(acc) => add_into(acc, &g),
                    }
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], v: Var, len: usize, f: impl FnOnce(&mut [f64])) {
    let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
    f(slot);
}

fn add_into(acc: &mut [f64], src: &[f64]) {
    for (a, s) in acc.iter_mut().zip(src) {
        *a += s;
    }
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Stable softmax with max subtraction.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in xs.iter_mut() {
        *x /= total;
    }
}

/// `c = a·b + beta·c` where `a` is `m × k` and `b` is `k × n`; the `*_t` flags
/// read the operand from transposed storage.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
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
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds asserted above; strides describe the row-major layouts.
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
