//! Dense row-major matrices and a reverse-mode tape over them.
//!
//! Every value in the crate is a 2-D [`Tensor`] of `f64`. Learnable
//! computation is recorded on a [`Tape`]: leaves are registered with
//! [`Tape::leaf`], each op pushes a node holding its forward value and the
//! handles of its inputs, and [`Tape::backward`] walks the nodes in reverse
//! to accumulate gradients. Nodes are appended in evaluation order, so the
//! reverse walk is a valid topological order and visits each node once.
//!
//! Ops check shapes before computing and reject non-finite outputs, so a
//! NaN is reported at the op that produced it rather than at the loss.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `rows x cols` matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor({}x{}) [", self.rows, self.cols)?;
        for r in 0..self.rows {
            if r > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![value],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                detail: format!("{} values for a {rows}x{cols} tensor", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a tensor from equal-length rows. An empty slice gives `0x0`.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    detail: format!("row {i} has {} columns, expected {cols}", r.len()),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// A `1 x n` row vector.
    pub fn row_vector(values: &[f64]) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            data: values.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value of a `1x1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    pub fn transpose(&self) -> Tensor {
        let mut out = Tensor::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols != other.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                detail: format!(
                    "{}x{} * {}x{}",
                    self.rows, self.cols, other.rows, other.cols
                ),
            });
        }
        let (n, m) = (self.rows, other.cols);
        let mut out = Tensor::zeros(n, m);
        for i in 0..n {
            let a_row = &self.data[i * self.cols..(i + 1) * self.cols];
            let out_row = &mut out.data[i * m..(i + 1) * m];
            for (k, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * m..(k + 1) * m];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Mean over rows, as a `1 x cols` row vector.
    pub fn mean_rows(&self) -> Result<Tensor> {
        if self.rows == 0 {
            return Err(Error::EmptyGraph);
        }
        let mut out = Tensor::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += v;
            }
        }
        let n = self.rows as f64;
        out.data.iter_mut().for_each(|v| *v /= n);
        Ok(out)
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::IndexOutOfRange {
                    index: i,
                    len: self.rows,
                });
            }
            data.extend_from_slice(self.row(i));
        }
        Ok(Tensor {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        if start > end || end > self.cols {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                detail: format!("[{start}, {end}) of {} columns", self.cols),
            });
        }
        let w = end - start;
        let mut data = Vec::with_capacity(self.rows * w);
        for r in 0..self.rows {
            data.extend_from_slice(&self.row(r)[start..end]);
        }
        Ok(Tensor {
            rows: self.rows,
            cols: w,
            data,
        })
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule of a user-supplied op: given the input values, the output
/// value and the upstream gradient, return one gradient per input.
pub type BackwardFn = Box<dyn Fn(&[&Tensor], &Tensor, &Tensor) -> Vec<Tensor>>;

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    /// `a (N x D) + b (1 x D)`.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `a (N x D) * z (N x 1)`, broadcasting `z` across columns.
    MulCol(Var, Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    MeanRows(Var),
    SumAll(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    GatherRows(Var, Vec<usize>),
    /// `a / s` where `s` is `1 x 1`.
    ScalarDiv(Var, Var),
    L2Norm(Var),
    Transpose(Var),
    Scale(Var, f64),
    BceWithLogits {
        logits: Var,
        targets: Vec<f64>,
        mask: Vec<bool>,
    },
    Custom(Vec<Var>, BackwardFn),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; zeros when `v` does not
    /// reach the loss.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads[v.0].take() {
            Some(g) => g,
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

/// Records operations for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        detail: format!("{}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols),
    }
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Smallest `|x|` over all inputs to `relu` recorded so far; infinite
    /// when there are none. Finite differences are unreliable once this
    /// is within a step size of zero.
    pub fn relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(&self.nodes[a.0].value),
                _ => None,
            })
            .flat_map(|t| t.data().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Registers an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push("leaf", value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        self.push("matmul", value, Op::MatMul(a, b))
    }

    /// Elementwise sum. When `b` is a single row and `a` is not, `b` is
    /// broadcast over the rows of `a` (bias addition).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let mut value = ta.clone();
            value.add_assign(tb);
            self.push("add", value, Op::Add(a, b))
        } else if tb.rows == 1 && tb.cols == ta.cols {
            let mut value = ta.clone();
            for r in 0..value.rows {
                let cols = value.cols;
                for (o, v) in value.data[r * cols..(r + 1) * cols].iter_mut().zip(&tb.data) {
                    *o += v;
                }
            }
            self.push("add", value, Op::AddRow(a, b))
        } else {
            Err(shape_err("add", ta, tb))
        }
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(shape_err("sub", ta, tb));
        }
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x - y).collect();
        let value = Tensor {
            rows: ta.rows,
            cols: ta.cols,
            data,
        };
        self.push("sub", value, Op::Sub(a, b))
    }

    /// Elementwise product. When `b` is a single column and `a` is not, `b`
    /// is broadcast across the columns of `a`.
    pub fn elementwise_mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
            let value = Tensor {
                rows: ta.rows,
                cols: ta.cols,
                data,
            };
            self.push("elementwise_mul", value, Op::Mul(a, b))
        } else if tb.cols == 1 && tb.rows == ta.rows {
            let mut value = ta.clone();
            let cols = value.cols;
            for r in 0..value.rows {
                let z = tb.data[r];
                value.data[r * cols..(r + 1) * cols]
                    .iter_mut()
                    .for_each(|v| *v *= z);
            }
            self.push("elementwise_mul", value, Op::MulCol(a, b))
        } else {
            Err(shape_err("elementwise_mul", ta, tb))
        }
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::ShapeMismatch {
            op: "concat_cols",
            detail: "no inputs".into(),
        })?;
        let rows = self.value(*first).rows;
        let mut cols = 0;
        for &p in parts {
            let t = self.value(p);
            if t.rows != rows {
                return Err(shape_err("concat_cols", self.value(*first), t));
            }
            cols += t.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let value = Tensor { rows, cols, data };
        self.push("concat_cols", value, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let value = self.value(a).slice_cols(start, end)?;
        self.push("slice_cols", value, Op::SliceCols(a, start))
    }

    /// Mean over rows (`N x D -> 1 x D`).
    pub fn concat_rows_mean(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).mean_rows()?;
        self.push("concat_rows_mean", value, Op::MeanRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).sum());
        self.push("sum", value, Op::SumAll(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push("relu", value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(sigmoid);
        self.push("sigmoid", value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::tanh);
        self.push("tanh", value, Op::Tanh(a))
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).gather_rows(indices)?;
        self.push("gather_rows", value, Op::GatherRows(a, indices.to_vec()))
    }

    /// Divides every entry of `a` by the `1x1` tensor `s`.
    pub fn scalar_div(&mut self, a: Var, s: Var) -> Result<Var> {
        let ts = self.value(s);
        if ts.shape() != (1, 1) {
            return Err(shape_err("scalar_div", self.value(a), ts));
        }
        let d = ts.data[0];
        let value = self.value(a).map(|v| v / d);
        self.push("scalar_div", value, Op::ScalarDiv(a, s))
    }

    /// Frobenius norm as a `1x1` tensor.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let value = Tensor::scalar(self.value(a).norm());
        self.push("l2_norm", value, Op::L2Norm(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.push("transpose", value, Op::Transpose(a))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).scale(s);
        self.push("scale", value, Op::Scale(a, s))
    }

    /// Mean binary cross-entropy of `sigmoid(logits)` against `targets`
    /// over the entries where `mask` is true. Returns a `1x1` loss; zero
    /// when nothing is unmasked.
    pub fn bce_with_logits(&mut self, logits: Var, targets: &[f64], mask: &[bool]) -> Result<Var> {
        let tl = self.value(logits);
        if targets.len() != tl.len() || mask.len() != tl.len() {
            return Err(Error::ShapeMismatch {
                op: "bce_with_logits",
                detail: format!(
                    "{} logits, {} targets, {} mask entries",
                    tl.len(),
                    targets.len(),
                    mask.len()
                ),
            });
        }
        let count = mask.iter().filter(|m| **m).count();
        let mut total = 0.0;
        for ((&l, &t), &m) in tl.data.iter().zip(targets).zip(mask) {
            if m {
                total += softplus(l) - t * l;
            }
        }
        let loss = if count == 0 { 0.0 } else { total / count as f64 };
        self.push(
            "bce_with_logits",
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
        )
    }

    /// Records an op whose value was computed by the caller, with a custom
    /// backward rule.
    pub fn custom(&mut self, inputs: &[Var], value: Tensor, backward: BackwardFn) -> Result<Var> {
        self.push("custom", value, Op::Custom(inputs.to_vec(), backward))
    }

    /// Reverse sweep from a `1x1` loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss {
                rows: lv.rows,
                cols: lv.cols,
            });
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (input, contrib) in self.local_grads(node, &g)? {
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Result<Vec<(Var, Tensor)>> {
        let out = &node.value;
        let grads = match &node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                vec![
                    (*a, g.matmul(&tb.transpose())?),
                    (*b, ta.transpose().matmul(g)?),
                ]
            }
            Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
            Op::AddRow(a, b) => {
                let mut gb = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                vec![(*a, g.clone()), (*b, gb)]
            }
            Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.scale(-1.0))],
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = zip_map(g, tb, |x, y| x * y);
                let gb = zip_map(g, ta, |x, y| x * y);
                vec![(*a, ga), (*b, gb)]
            }
            Op::MulCol(a, z) => {
                let (ta, tz) = (self.value(*a), self.value(*z));
                let mut ga = g.clone();
                let mut gz = Tensor::zeros(tz.rows, 1);
                let cols = g.cols;
                for r in 0..g.rows {
                    let zr = tz.data[r];
                    let g_row = g.row(r);
                    ga.data[r * cols..(r + 1) * cols]
                        .iter_mut()
                        .for_each(|v| *v *= zr);
                    gz.data[r] = g_row.iter().zip(ta.row(r)).map(|(x, y)| x * y).sum();
                }
                vec![(*a, ga), (*z, gz)]
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                let mut v = Vec::with_capacity(parts.len());
                for &p in parts {
                    let w = self.value(p).cols;
                    v.push((p, g.slice_cols(start, start + w)?));
                    start += w;
                }
                v
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows, ta.cols);
                for r in 0..g.rows {
                    let dst = r * ta.cols + start;
                    ga.data[dst..dst + g.cols].copy_from_slice(g.row(r));
                }
                vec![(*a, ga)]
            }
            Op::MeanRows(a) => {
                let ta = self.value(*a);
                let n = ta.rows as f64;
                let mut ga = Tensor::zeros(ta.rows, ta.cols);
                for r in 0..ta.rows {
                    for (o, v) in ga.data[r * ta.cols..(r + 1) * ta.cols].iter_mut().zip(&g.data) {
                        *o = v / n;
                    }
                }
                vec![(*a, ga)]
            }
            Op::SumAll(a) => {
                let ta = self.value(*a);
                vec![(*a, Tensor::filled(ta.rows, ta.cols, g.data[0]))]
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                // derivative at exactly 0 is taken as 0
                vec![(*a, zip_map(g, ta, |x, y| if y > 0.0 { x } else { 0.0 }))]
            }
            Op::Sigmoid(a) => vec![(*a, zip_map(g, out, |x, s| x * s * (1.0 - s)))],
            Op::Tanh(a) => vec![(*a, zip_map(g, out, |x, t| x * (1.0 - t * t)))],
            Op::GatherRows(a, indices) => {
                let ta = self.value(*a);
                let mut ga = Tensor::zeros(ta.rows, ta.cols);
                for (k, &i) in indices.iter().enumerate() {
                    for (o, v) in ga.data[i * ta.cols..(i + 1) * ta.cols].iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                vec![(*a, ga)]
            }
            Op::ScalarDiv(a, s) => {
                let d = self.value(*s).data[0];
                let ga = g.scale(1.0 / d);
                // d(a/s)/ds = -a/s^2 = -out/s
                let gs: f64 = g.data.iter().zip(&out.data).map(|(x, o)| x * o).sum::<f64>() / -d;
                vec![(*a, ga), (*s, Tensor::scalar(gs))]
            }
            Op::L2Norm(a) => {
                let ta = self.value(*a);
                let n = out.data[0];
                let gn = g.data[0];
                let ga = if n == 0.0 {
                    Tensor::zeros(ta.rows, ta.cols)
                } else {
                    ta.scale(gn / n)
                };
                vec![(*a, ga)]
            }
            Op::Transpose(a) => vec![(*a, g.transpose())],
            Op::Scale(a, s) => vec![(*a, g.scale(*s))],
            Op::BceWithLogits {
                logits,
                targets,
                mask,
            } => {
                let tl = self.value(*logits);
                let count = mask.iter().filter(|m| **m).count();
                let mut gl = Tensor::zeros(tl.rows, tl.cols);
                if count > 0 {
                    let scale = g.data[0] / count as f64;
                    for (i, o) in gl.data.iter_mut().enumerate() {
                        if mask[i] {
                            *o = (sigmoid(tl.data[i]) - targets[i]) * scale;
                        }
                    }
                }
                vec![(*logits, gl)]
            }
            Op::Custom(inputs, rule) => {
                let values: Vec<&Tensor> = inputs.iter().map(|v| self.value(*v)).collect();
                let gs = rule(&values, out, g);
                if gs.len() != inputs.len() {
                    return Err(Error::ShapeMismatch {
                        op: "custom",
                        detail: format!("{} gradients for {} inputs", gs.len(), inputs.len()),
                    });
                }
                inputs.iter().copied().zip(gs).collect()
            }
        };
        Ok(grads)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        rows: a.rows,
        cols: a.cols,
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

pub fn sigmoid(x: f64) -> f64 {
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

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = t(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(a.matmul(&Tensor::identity(2)).unwrap(), a);
    }

    #[test]
    fn mean_of_rows() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[1.0, 3.0], &[3.0, 5.0]])).unwrap();
        let m = tape.concat_rows_mean(x).unwrap();
        assert_eq!(tape.value(m).data(), &[2.0, 4.0]);
    }

    #[test]
    fn gather_picks_rows_in_order() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]])).unwrap();
        let g = tape.gather_rows(x, &[2, 0]).unwrap();
        assert_eq!(tape.value(g), &t(&[&[5.0, 6.0], &[1.0, 2.0]]));
        assert!(matches!(
            tape.gather_rows(x, &[3]),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0)).unwrap();
        let sq = tape.elementwise_mul(x, x).unwrap();
        let loss = tape.sum(sq).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).item(), 6.0);
    }

    #[test]
    fn unreachable_leaf_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(2.0)).unwrap();
        let w = tape.leaf(t(&[&[1.0, 2.0]])).unwrap();
        let loss = tape.sum(x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w), Tensor::zeros(1, 2));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(2, 2)).unwrap();
        assert!(matches!(
            tape.backward(x),
            Err(Error::NonScalarLoss { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(2, 3)).unwrap();
        let b = tape.leaf(Tensor::zeros(2, 3)).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        let c = tape.leaf(Tensor::zeros(3, 1)).unwrap();
        assert!(matches!(tape.add(a, c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn non_finite_is_caught_at_the_op() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::scalar(1.0)).unwrap();
        let z = tape.leaf(Tensor::scalar(0.0)).unwrap();
        assert!(matches!(
            tape.scalar_div(a, z),
            Err(Error::NonFinite { op: "scalar_div" })
        ));
        assert!(tape.leaf(Tensor::scalar(f64::NAN)).is_err());
    }

    #[test]
    fn broadcasts() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(&[&[1.0, 2.0], &[3.0, 4.0]])).unwrap();
        let b = tape.leaf(t(&[&[10.0, 20.0]])).unwrap();
        let z = tape.leaf(t(&[&[2.0], &[-1.0]])).unwrap();
        let s = tape.add(a, b).unwrap();
        assert_eq!(tape.value(s), &t(&[&[11.0, 22.0], &[13.0, 24.0]]));
        let m = tape.elementwise_mul(a, z).unwrap();
        assert_eq!(tape.value(m), &t(&[&[2.0, 4.0], &[-3.0, -4.0]]));
    }

    #[test]
    fn bce_at_zero_logits_is_ln2_and_masking_drops_entries() {
        let mut tape = Tape::new();
        let l = tape.leaf(Tensor::zeros(1, 3)).unwrap();
        let loss = tape
            .bce_with_logits(l, &[1.0, 0.0, 1.0], &[true, true, false])
            .unwrap();
        assert!((tape.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let g = tape.backward(loss).unwrap().get(l);
        assert_eq!(g.data()[2], 0.0);
        assert_eq!(g.data()[0], -0.25);
    }

    #[test]
    fn relu_margin_tracks_the_closest_input() {
        let mut tape = Tape::new();
        assert_eq!(tape.relu_margin(), f64::INFINITY);
        let x = tape.leaf(Tensor::from_rows(&[[0.5, -0.02], [3.0, -1.0]]).unwrap()).unwrap();
        tape.relu(x).unwrap();
        assert_eq!(tape.relu_margin(), 0.02);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(-800.0), 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(softplus(-800.0), 0.0);
        assert_eq!(softplus(800.0), 800.0);
    }
}
