//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] is an append-only arena. Every operation evaluates eagerly,
//! stores its value, and records the ids of its inputs. Because a node can
//! only refer to nodes created before it, insertion order is a topological
//! order and the backward pass is a single reverse sweep.
//!
//! Fused kernels outside this module plug in through [`CustomOp`].

use std::fmt;
use std::sync::Arc;

use crate::tensor::{sigmoid, ShapeError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    /// `scale · x + shift`; only the scale matters backwards.
    Affine(NodeId, f64),
    Sigmoid(NodeId),
    Tanh(NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    SumAll(NodeId),
    SliceCols(NodeId, usize),
    ConcatCols(NodeId, NodeId),
    SoftmaxCrossEntropy(NodeId, Vec<usize>),
    Custom(Arc<dyn CustomOp>, Vec<NodeId>),
}

/// An operation with a hand-written backward pass.
pub trait CustomOp: fmt::Debug + Send + Sync {
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor, ShapeError>;

    /// Gradients with respect to each input, in input order, given the
    /// upstream gradient `g` of the output.
    fn backward(&self, inputs: &[&Tensor], out: &Tensor, g: &Tensor) -> Vec<Tensor>;
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GradError {
    #[error("gradient requires a scalar loss, node has shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("node {0} does not belong to this tape")]
    UnknownNode(usize),
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let v = self.value(a).zip_with(self.value(b), "div", |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), v))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.affine(a, factor, 0.0)
    }

    /// `scale · a + shift`, e.g. `affine(x, -1.0, 1.0)` is `1 − x`.
    pub fn affine(&mut self, a: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(a).map(|x| scale * x + shift);
        self.push(Op::Affine(a, scale), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId, ShapeError> {
        let v = self.value(a).reshaped(rows, cols)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    pub fn custom(
        &mut self,
        op: Arc<dyn CustomOp>,
        inputs: &[NodeId],
    ) -> Result<NodeId, ShapeError> {
        let values: Vec<&Tensor> = inputs.iter().map(|&id| self.value(id)).collect();
        let v = op.forward(&values)?;
        Ok(self.push(Op::Custom(op, inputs.to_vec()), v))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::SumAll(a), v)
    }

    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Columns `start .. start + width`.
    pub fn slice_cols(
        &mut self,
        a: NodeId,
        start: usize,
        width: usize,
    ) -> Result<NodeId, ShapeError> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if start + width > cols {
            return Err(ShapeError::Invalid {
                op: "slice_cols",
                detail: format!("columns {start}..{} out of range for {cols}", start + width),
            });
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&x.row_slice(r)[start..start + width]);
        }
        let v = Tensor::new(rows, width, data)?;
        Ok(self.push(Op::SliceCols(a, start), v))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, ShapeError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.rows() != y.rows() {
            return Err(ShapeError::Mismatch {
                op: "concat_cols",
                lhs: x.shape(),
                rhs: y.shape(),
            });
        }
        let mut data = Vec::with_capacity(x.len() + y.len());
        for r in 0..x.rows() {
            data.extend_from_slice(x.row_slice(r));
            data.extend_from_slice(y.row_slice(r));
        }
        let v = Tensor::new(x.rows(), x.cols() + y.cols(), data)?;
        Ok(self.push(Op::ConcatCols(a, b), v))
    }

    /// Mean over rows of `−log softmax(logits[r])[labels[r]]`, stabilised by
    /// subtracting the row maximum.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<NodeId, ShapeError> {
        let x = self.value(logits);
        let (rows, k) = x.shape();
        if labels.len() != rows {
            return Err(ShapeError::Invalid {
                op: "softmax_cross_entropy",
                detail: format!("{} labels for {rows} rows of logits", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(ShapeError::Invalid {
                op: "softmax_cross_entropy",
                detail: format!("label {bad} out of range for {k} classes"),
            });
        }
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            total += row_log_sum_exp(x.row_slice(r)) - x.get(r, label);
        }
        let v = Tensor::scalar(total / rows.max(1) as f64);
        Ok(self.push(Op::SoftmaxCrossEntropy(logits, labels.to_vec()), v))
    }

    /// Reverse sweep from a `1 × 1` loss. Returns one gradient per entry of
    /// `wrt`, zero-filled for nodes the loss does not depend on.
    pub fn gradient(&self, loss: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>, GradError> {
        if loss.0 >= self.nodes.len() {
            return Err(GradError::UnknownNode(loss.0));
        }
        if let Some(bad) = wrt.iter().find(|id| id.0 >= self.nodes.len()) {
            return Err(GradError::UnknownNode(bad.0));
        }
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(GradError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(wrt
            .iter()
            .map(|id| {
                grads.get(id.0).and_then(Clone::clone).unwrap_or_else(|| {
                    let (r, c) = self.shape(*id);
                    Tensor::zeros(r, c)
                })
            })
            .collect())
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, g.mul(vb).expect("forward shapes"));
                self.accumulate(grads, *b, g.mul(va).expect("forward shapes"));
            }
            Op::Div(a, b) => {
                let vb = self.value(*b);
                let ga = g.zip_with(vb, "div", |g, y| g / y).expect("forward shapes");
                // d(a/b)/db = −a/b² = −out/b
                let gb = g
                    .mul(out)
                    .and_then(|t| t.zip_with(vb, "div", |t, y| -t / y))
                    .expect("forward shapes");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Affine(a, scale) => self.accumulate(grads, *a, g.scale(*scale)),
            Op::Sigmoid(a) => {
                let d = g
                    .zip_with(out, "sigmoid", |g, s| g * s * (1.0 - s))
                    .expect("same shape");
                self.accumulate(grads, *a, d);
            }
            Op::Tanh(a) => {
                let d = g
                    .zip_with(out, "tanh", |g, t| g * (1.0 - t * t))
                    .expect("same shape");
                self.accumulate(grads, *a, d);
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let ga = g.matmul(&vb.transpose()).expect("forward shapes");
                let gb = va.transpose().matmul(g).expect("forward shapes");
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Transpose(a) => self.accumulate(grads, *a, g.transpose()),
            Op::Reshape(a) => {
                let (r, c) = self.shape(*a);
                self.accumulate(grads, *a, g.reshaped(r, c).expect("same length"));
            }
            Op::SumAll(a) => {
                let (r, c) = self.shape(*a);
                let s = g.item().expect("scalar");
                self.accumulate(grads, *a, Tensor::filled(r, c, s));
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.shape(*a);
                let w = g.cols();
                let mut d = Tensor::zeros(rows, cols);
                for r in 0..rows {
                    for c in 0..w {
                        d.set(r, start + c, g.get(r, c));
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::ConcatCols(a, b) => {
                let (rows, ca) = self.shape(*a);
                let cb = self.shape(*b).1;
                let mut da = Tensor::zeros(rows, ca);
                let mut db = Tensor::zeros(rows, cb);
                for r in 0..rows {
                    da.data_mut()[r * ca..(r + 1) * ca].copy_from_slice(&g.row_slice(r)[..ca]);
                    db.data_mut()[r * cb..(r + 1) * cb].copy_from_slice(&g.row_slice(r)[ca..]);
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
            Op::SoftmaxCrossEntropy(a, labels) => {
                let x = self.value(*a);
                let (rows, k) = x.shape();
                let s = g.item().expect("scalar") / rows.max(1) as f64;
                let mut d = Tensor::zeros(rows, k);
                for (r, &label) in labels.iter().enumerate() {
                    let row = x.row_slice(r);
                    let lse = row_log_sum_exp(row);
                    for c in 0..k {
                        let p = (row[c] - lse).exp();
                        let onehot = if c == label { 1.0 } else { 0.0 };
                        d.set(r, c, s * (p - onehot));
                    }
                }
                self.accumulate(grads, *a, d);
            }
            Op::Custom(op, inputs) => {
                let values: Vec<&Tensor> = inputs.iter().map(|&id| self.value(id)).collect();
                for (&id, d) in inputs.iter().zip(op.backward(&values, out, g)) {
                    self.accumulate(grads, id, d);
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], target: NodeId, delta: Tensor) {
        let (r, c) = self.shape(target);
        let delta = delta.reduce_to(r, c);
        match &mut grads[target.0] {
            Some(existing) => {
                for (e, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                    *e += d;
                }
            }
            slot @ None => *slot = Some(delta),
        }
    }
}

fn row_log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
