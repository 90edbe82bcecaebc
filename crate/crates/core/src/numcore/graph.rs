//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node to the tape; node creation order is a
//! topological order, so `backward` is a single reverse sweep that visits
//! each node once. Parameters enter the tape through [`Graph::param`] and
//! their gradients are read back with [`Gradients::param`].

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::params::{ParamId, ParamStore};
use super::tensor::{logsumexp, matmul_nt, matmul_raw, matmul_tn, Tensor};
use super::NumError;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// An operation with a hand-written vector-Jacobian product.
///
/// Used for structured losses (the CRF negative log-likelihood) whose
/// backward pass is cheaper in closed form than through primitives.
pub trait CustomOp: Send + Sync {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, NumError>;
    /// Returns one gradient per input, shaped like that input.
    fn backward(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>, usize),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
        len: usize,
    },
    Gather(Var, Vec<usize>),
    Pick(Var, Vec<usize>),
    Softmax(Var),
    LogSoftmax(Var),
    LogSumExp(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Square(Var),
    LayerNorm {
        input: Var,
        inv_std: Vec<f64>,
    },
    Dropout(Var, Vec<f64>),
    Mean(Var),
    Sum(Var),
    Custom(Arc<dyn CustomOp>, Vec<Var>),
}

impl fmt::Debug for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Custom(op, _) => write!(f, "Custom({})", op.name()),
            Op::Leaf => write!(f, "Leaf"),
            _ => write!(f, "Op"),
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. Confined to one thread for the duration of a step.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Var>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id).and_then(|v| self.get(*v))
    }

    /// Gradients aligned with `store`'s parameter order; `None` for
    /// parameters that did not take part in the graph.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Option<Tensor>> {
        store.ids().map(|id| self.param(id).cloned()).collect()
    }
}

fn shape_err(op: &'static str, shapes: &[&[usize]]) -> NumError {
    NumError::Shape {
        op,
        shapes: shapes.iter().map(|s| s.to_vec()).collect(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
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

    /// A constant input; no gradient is tracked.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// A differentiable leaf that is not backed by a parameter store.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Brings a stored parameter onto the tape. Repeated calls with the
    /// same id return the same node, so gradients accumulate in one place.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(shape_err("matmul", &[ta.shape(), tb.shape()]));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = Tensor::new(vec![m, n], matmul_raw(ta.data(), tb.data(), m, k, n))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err(op, &[ta.shape(), tb.shape()]));
        }
        Ok(())
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a) || self.rg(b);
        self.push(out, op, rg)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("multiply", a, b)?;
        Ok(self.zip(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.map(a, |x| x * factor, Op::Scale(a, factor))
    }

    fn row_check(&self, op: &'static str, x: Var, row: Var) -> Result<(), NumError> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tx.shape().len() != 2 || tr.numel() != tx.shape()[1] {
            return Err(shape_err(op, &[tx.shape(), tr.shape()]));
        }
        Ok(())
    }

    /// `x[i, j] + bias[j]` for `x: [n, d]`, `bias: [d]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, NumError> {
        self.row_check("add_row", x, bias)?;
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + tb.data()[i % d])
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(x, bias), rg))
    }

    /// `x[i, j] * gain[j]` for `x: [n, d]`, `gain: [d]`.
    pub fn mul_row(&mut self, x: Var, gain: Var) -> Result<Var, NumError> {
        self.row_check("mul_row", x, gain)?;
        let (tx, tg) = (self.value(x), self.value(gain));
        let d = tx.cols();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * tg.data()[i % d])
            .collect();
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(gain);
        Ok(self.push(out, Op::MulRow(x, gain), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, NumError> {
        let ta = self.value(a);
        if ta.shape().len() != 2 {
            return Err(shape_err("transpose", &[ta.shape()]));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let mut data = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                data[j * m + i] = ta.data()[i * n + j];
            }
        }
        let out = Tensor::new(vec![n, m], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Transpose(a), rg))
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, NumError> {
        if inputs.is_empty() || axis > 1 {
            return Err(shape_err("concat", &[]));
        }
        let shapes: Vec<&[usize]> = inputs.iter().map(|v| self.value(*v).shape()).collect();
        if shapes.iter().any(|s| s.len() != 2) {
            return Err(shape_err("concat", &shapes));
        }
        let other = 1 - axis;
        if shapes.iter().any(|s| s[other] != shapes[0][other]) {
            return Err(shape_err("concat", &shapes));
        }
        let out = if axis == 0 {
            let rows: usize = shapes.iter().map(|s| s[0]).sum();
            let mut data = Vec::with_capacity(rows * shapes[0][1]);
            for v in inputs {
                data.extend_from_slice(self.value(*v).data());
            }
            Tensor::new(vec![rows, shapes[0][1]], data)?
        } else {
            let rows = shapes[0][0];
            let cols: usize = shapes.iter().map(|s| s[1]).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for v in inputs {
                    data.extend_from_slice(self.value(*v).row(r));
                }
            }
            Tensor::new(vec![rows, cols], data)?
        };
        let rg = inputs.iter().any(|v| self.rg(*v));
        Ok(self.push(out, Op::Concat(inputs.to_vec(), axis), rg))
    }

    /// Contiguous slice of a 2-D tensor along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, NumError> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || axis > 1 || start + len > ta.shape()[axis] || len == 0 {
            return Err(shape_err("slice", &[ta.shape(), &[axis, start, len]]));
        }
        let (m, n) = (ta.shape()[0], ta.shape()[1]);
        let out = if axis == 0 {
            Tensor::new(vec![len, n], ta.data()[start * n..(start + len) * n].to_vec())?
        } else {
            let mut data = Vec::with_capacity(m * len);
            for r in 0..m {
                data.extend_from_slice(&ta.row(r)[start..start + len]);
            }
            Tensor::new(vec![m, len], data)?
        };
        let rg = self.rg(a);
        Ok(self.push(
            out,
            Op::Slice {
                input: a,
                axis,
                start,
                len,
            },
            rg,
        ))
    }

    /// Row lookup: `table: [V, d]`, `ids` -> `[ids.len(), d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var, NumError> {
        let tt = self.value(table);
        if tt.shape().len() != 2 || ids.is_empty() || ids.iter().any(|&i| i >= tt.shape()[0]) {
            return Err(shape_err("embedding", &[tt.shape(), &[ids.len()]]));
        }
        let d = tt.shape()[1];
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(tt.row(i));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        let rg = self.rg(table);
        Ok(self.push(out, Op::Gather(table, ids.to_vec()), rg))
    }

    /// Selects `a[i, cols[i]]` for every row, giving `[n]`.
    pub fn pick(&mut self, a: Var, cols: &[usize]) -> Result<Var, NumError> {
        let ta = self.value(a);
        if ta.shape().len() != 2 || ta.shape()[0] != cols.len() || cols.iter().any(|&c| c >= ta.shape()[1])
        {
            return Err(shape_err("pick", &[ta.shape(), &[cols.len()]]));
        }
        let data = cols.iter().enumerate().map(|(i, &c)| ta.row(i)[c]).collect();
        let out = Tensor::new(vec![cols.len()], data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Pick(a, cols.to_vec()), rg))
    }

    fn rowwise(&mut self, a: Var, f: impl Fn(&[f64], &mut [f64]), op: Op) -> Var {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut data = vec![0.0; ta.numel()];
        for r in 0..ta.rows() {
            f(ta.row(r), &mut data[r * cols..(r + 1) * cols]);
        }
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, op, rg)
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        self.rowwise(
            a,
            |x, out| {
                let lse = logsumexp(x);
                for (o, v) in out.iter_mut().zip(x) {
                    *o = (v - lse).exp();
                }
            },
            Op::Softmax(a),
        )
    }

    /// Log-softmax over the last axis.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        self.rowwise(
            a,
            |x, out| {
                let lse = logsumexp(x);
                for (o, v) in out.iter_mut().zip(x) {
                    *o = v - lse;
                }
            },
            Op::LogSoftmax(a),
        )
    }

    /// Log-sum-exp over the last axis: `[n, d] -> [n]`.
    pub fn logsumexp(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let data: Vec<f64> = (0..ta.rows()).map(|r| logsumexp(ta.row(r))).collect();
        let out = Tensor::new(vec![data.len()], data).expect("rows");
        let rg = self.rg(a);
        self.push(out, Op::LogSumExp(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, |x| x * x, Op::Square(a))
    }

    /// Normalises each row to zero mean and unit variance (no affine part;
    /// compose with [`Graph::mul_row`] and [`Graph::add_row`]).
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut data = vec![0.0; ta.numel()];
        let mut inv_std = Vec::with_capacity(ta.rows());
        for r in 0..ta.rows() {
            let x = ta.row(r);
            let mean = x.iter().sum::<f64>() / cols as f64;
            let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, v) in data[r * cols..(r + 1) * cols].iter_mut().zip(x) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let out = Tensor::new(ta.shape().to_vec(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, Op::LayerNorm { input: a, inv_std }, rg)
    }

    /// Multiplies by a caller-supplied mask (already scaled by the keep
    /// probability's inverse).
    pub fn dropout(&mut self, a: Var, mask: Vec<f64>) -> Result<Var, NumError> {
        let ta = self.value(a);
        if mask.len() != ta.numel() {
            return Err(shape_err("dropout", &[ta.shape(), &[mask.len()]]));
        }
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Dropout(a, mask), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var, NumError> {
        let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
        let out = op.forward(&values)?;
        let rg = inputs.iter().any(|v| self.rg(*v));
        Ok(self.push(out, Op::Custom(op, inputs.to_vec()), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(NumError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::filled(lt.shape(), 1.0));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let like = |t: &Tensor, data: Vec<f64>| Tensor::new(t.shape().to_vec(), data).expect("shape");
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                if self.rg(*a) {
                    let ga = matmul_nt(g.data(), tb.data(), m, n, k);
                    self.accumulate(grads, *a, like(ta, ga));
                }
                if self.rg(*b) {
                    let gb = matmul_tn(ta.data(), g.data(), m, k, n);
                    self.accumulate(grads, *b, like(tb, gb));
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                let neg = g.data().iter().map(|v| -v).collect();
                self.accumulate(grads, *b, like(g, neg));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                let gb = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                self.accumulate(grads, *a, like(ta, ga));
                self.accumulate(grads, *b, like(tb, gb));
            }
            Op::Scale(a, f) => {
                let ga = g.data().iter().map(|v| v * f).collect();
                self.accumulate(grads, *a, like(g, ga));
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                let tb = self.value(*bias);
                let d = tb.numel();
                let mut gb = vec![0.0; d];
                for (i, v) in g.data().iter().enumerate() {
                    gb[i % d] += v;
                }
                self.accumulate(grads, *bias, like(tb, gb));
            }
            Op::MulRow(x, gain) => {
                let (tx, tg) = (self.value(*x), self.value(*gain));
                let d = tg.numel();
                let gx = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v * tg.data()[i % d])
                    .collect();
                let mut gg = vec![0.0; d];
                for (i, (v, xv)) in g.data().iter().zip(tx.data()).enumerate() {
                    gg[i % d] += v * xv;
                }
                self.accumulate(grads, *x, like(tx, gx));
                self.accumulate(grads, *gain, like(tg, gg));
            }
            Op::Transpose(a) => {
                let (m, n) = (out.shape()[0], out.shape()[1]);
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        ga[j * m + i] = g.data()[i * n + j];
                    }
                }
                self.accumulate(grads, *a, like(self.value(*a), ga));
            }
            Op::Concat(inputs, axis) => {
                if *axis == 0 {
                    let mut offset = 0;
                    for v in inputs {
                        let t = self.value(*v);
                        let n = t.numel();
                        self.accumulate(grads, *v, like(t, g.data()[offset..offset + n].to_vec()));
                        offset += n;
                    }
                } else {
                    let rows = out.shape()[0];
                    let mut offset = 0;
                    for v in inputs {
                        let t = self.value(*v);
                        let c = t.shape()[1];
                        let mut gv = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            gv.extend_from_slice(&g.row(r)[offset..offset + c]);
                        }
                        self.accumulate(grads, *v, like(t, gv));
                        offset += c;
                    }
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                len,
            } => {
                let t = self.value(*input);
                let (m, n) = (t.shape()[0], t.shape()[1]);
                let mut ga = vec![0.0; m * n];
                if *axis == 0 {
                    ga[start * n..(start + len) * n].copy_from_slice(g.data());
                } else {
                    for r in 0..m {
                        ga[r * n + start..r * n + start + len].copy_from_slice(g.row(r));
                    }
                }
                self.accumulate(grads, *input, like(t, ga));
            }
            Op::Gather(table, ids) => {
                let t = self.value(*table);
                let d = t.shape()[1];
                let mut gt = vec![0.0; t.numel()];
                for (r, &id) in ids.iter().enumerate() {
                    for (o, v) in gt[id * d..(id + 1) * d].iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *table, like(t, gt));
            }
            Op::Pick(a, cols) => {
                let t = self.value(*a);
                let n = t.cols();
                let mut ga = vec![0.0; t.numel()];
                for (r, &c) in cols.iter().enumerate() {
                    ga[r * n + c] = g.data()[r];
                }
                self.accumulate(grads, *a, like(t, ga));
            }
            Op::Softmax(a) => {
                let cols = out.cols();
                let mut ga = vec![0.0; out.numel()];
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gy).map(|(a, b)| a * b).sum();
                    for j in 0..cols {
                        ga[r * cols + j] = y[j] * (gy[j] - dot);
                    }
                }
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::LogSoftmax(a) => {
                let cols = out.cols();
                let mut ga = vec![0.0; out.numel()];
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let total: f64 = gy.iter().sum();
                    for j in 0..cols {
                        ga[r * cols + j] = gy[j] - y[j].exp() * total;
                    }
                }
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::LogSumExp(a) => {
                let t = self.value(*a);
                let cols = t.cols();
                let mut ga = vec![0.0; t.numel()];
                for r in 0..t.rows() {
                    let lse = out.data()[r];
                    for (j, x) in t.row(r).iter().enumerate() {
                        ga[r * cols + j] = g.data()[r] * (x - lse).exp();
                    }
                }
                self.accumulate(grads, *a, like(t, ga));
            }
            Op::Sigmoid(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::Tanh(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(gv, y)| gv * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::Relu(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, x)| if *x > 0.0 { *gv } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::Square(a) => {
                let ga = g
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(gv, x)| 2.0 * gv * x)
                    .collect();
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::LayerNorm { input, inv_std } => {
                let cols = out.cols();
                let nf = cols as f64;
                let mut ga = vec![0.0; out.numel()];
                for r in 0..out.rows() {
                    let (y, gy) = (out.row(r), g.row(r));
                    let mean_g: f64 = gy.iter().sum::<f64>() / nf;
                    let mean_gy: f64 = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for j in 0..cols {
                        ga[r * cols + j] = inv_std[r] * (gy[j] - mean_g - y[j] * mean_gy);
                    }
                }
                self.accumulate(grads, *input, like(out, ga));
            }
            Op::Dropout(a, mask) => {
                let ga = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                self.accumulate(grads, *a, like(out, ga));
            }
            Op::Sum(a) => {
                let t = self.value(*a);
                self.accumulate(grads, *a, Tensor::filled(t.shape(), g.item()));
            }
            Op::Mean(a) => {
                let t = self.value(*a);
                self.accumulate(grads, *a, Tensor::filled(t.shape(), g.item() / t.numel() as f64));
            }
            Op::Custom(op, inputs) => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let gs = op.backward(&values, out, g);
                for (v, gv) in inputs.iter().zip(gs) {
                    self.accumulate(grads, *v, gv);
                }
            }
        }
    }
}
