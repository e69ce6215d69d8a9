//! Retained-tape reverse-mode differentiation.
//!
//! A [`Tape`] records every operation whose inputs include at least one
//! tracked tensor. [`Tape::backward`] replays the records in reverse to
//! accumulate gradients; [`Tape::vjp_contribution`] runs the same sweep
//! seeded at an arbitrary interior node, which yields the part of a
//! boundary gradient contributed by that node alone.

use std::collections::BTreeMap;

use crate::autodiff::tensor::{NodeId, Tensor};
use crate::error::{Error, Result};

/// An operation input: either another tape node or an untracked constant
/// whose value is saved verbatim for the backward pass.
#[derive(Debug, Clone)]
enum InputRef {
    Node(NodeId),
    Const(Tensor),
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    ScalarMul(f64),
    Mul,
    Relu,
    RowSoftmax,
    SumAxis(usize),
    Concat(usize),
    Gather(Vec<usize>),
    ScatterAdd { indices: Vec<usize> },
    CrossEntropy { labels: Vec<usize> },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    inputs: Vec<InputRef>,
    /// Output value, always detached. Saved values of every node double as
    /// the activations needed by the backward rules.
    value: Tensor,
}

/// Gradients keyed by tape node, produced by a reverse sweep.
#[derive(Debug, Clone)]
pub struct GradStore {
    grads: Vec<Option<Tensor>>,
}

impl GradStore {
    pub fn get(&self, node: NodeId) -> Option<&Tensor> {
        self.grads.get(node.0).and_then(Option::as_ref)
    }

    /// Gradient for `node`, or a zero tensor of the node's output shape.
    pub fn get_or_zeros(&self, node: NodeId, shape: &[usize]) -> Tensor {
        match self.get(node) {
            Some(g) => g.detached(),
            None => Tensor::zeros(shape.to_vec()),
        }
    }
}

/// Outcome of a single-source VJP extraction.
#[derive(Debug, Clone)]
pub struct VjpOutcome {
    /// `(∂ y_source / ∂ y_boundary)ᵀ · upstream`, zero when no path exists.
    pub grad: Tensor,
    /// False when the boundary is unreachable from the source.
    pub path_found: bool,
}

/// Append-only record of forward operations.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    boundary_tags: BTreeMap<String, NodeId>,
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

    /// Track a tensor as a differentiable leaf (parameter or input).
    pub fn leaf(&mut self, value: &Tensor) -> Tensor {
        let id = NodeId(self.nodes.len());
        let detached = value.detached();
        self.nodes.push(Node { op: Op::Leaf, inputs: vec![], value: detached.clone() });
        detached.with_node(id)
    }

    /// Name a node so later passes can locate it without graph search.
    pub fn tag_boundary(&mut self, name: impl Into<String>, node: NodeId) {
        self.boundary_tags.insert(name.into(), node);
    }

    pub fn boundary(&self, name: &str) -> Option<NodeId> {
        self.boundary_tags.get(name).copied()
    }

    pub fn node_shape(&self, node: NodeId) -> Result<&[usize]> {
        self.nodes
            .get(node.0)
            .map(|n| n.value.shape())
            .ok_or(Error::UnknownNode { node: node.0 })
    }

    pub fn node_value(&self, node: NodeId) -> Result<&Tensor> {
        self.nodes
            .get(node.0)
            .map(|n| &n.value)
            .ok_or(Error::UnknownNode { node: node.0 })
    }

    fn record(&mut self, op: Op, inputs: &[&Tensor], value: Tensor) -> Tensor {
        if inputs.iter().all(|t| t.node().is_none()) {
            return value;
        }
        let refs = inputs
            .iter()
            .map(|t| match t.node() {
                Some(id) => InputRef::Node(id),
                None => InputRef::Const(t.detached()),
            })
            .collect();
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs: refs, value: value.clone() });
        value.with_node(id)
    }

    // ── forward operations ──────────────────────────────────────────────

    pub fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (m, k) = require_rank2(a, "matmul")?;
        let (k2, n) = require_rank2(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", a, b));
        }
        let value = matmul_data(a.data(), b.data(), m, k, n);
        Ok(self.record(Op::MatMul, &[a, b], Tensor::new(vec![m, n], value)?))
    }

    pub fn transpose(&mut self, a: &Tensor) -> Result<Tensor> {
        let (m, n) = require_rank2(a, "transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = a.data()[i * n + j];
            }
        }
        Ok(self.record(Op::Transpose, &[a], Tensor::new(vec![n, m], out)?))
    }

    pub fn add(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_elementwise(a, b, Op::Add, "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_elementwise(a, b, Op::Sub, "sub", |x, y| x - y)
    }

    /// Elementwise product; both operands must share a shape.
    pub fn mul(&mut self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.zip_elementwise(a, b, Op::Mul, "elementwise-mul", |x, y| x * y)
    }

    fn zip_elementwise(
        &mut self,
        a: &Tensor,
        b: &Tensor,
        op: Op,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err(name, a, b));
        }
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(self.record(op, &[a, b], Tensor::new(a.shape().to_vec(), data)?))
    }

    pub fn scalar_mul(&mut self, a: &Tensor, c: f64) -> Result<Tensor> {
        let data = a.data().iter().map(|&x| x * c).collect();
        Ok(self.record(Op::ScalarMul(c), &[a], Tensor::new(a.shape().to_vec(), data)?))
    }

    /// Rectified linear unit; the subgradient at exactly 0 is defined as 0.
    pub fn relu(&mut self, a: &Tensor) -> Result<Tensor> {
        let data = a.data().iter().map(|&x| x.max(0.0)).collect();
        Ok(self.record(Op::Relu, &[a], Tensor::new(a.shape().to_vec(), data)?))
    }

    /// Softmax applied independently to each row (a rank-1 tensor is one row).
    pub fn row_softmax(&mut self, a: &Tensor) -> Result<Tensor> {
        let (rows, cols) = (a.rows(), a.cols());
        if cols == 0 {
            return Err(Error::Shape { op: "row-softmax", detail: "zero columns".into() });
        }
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            softmax_row(&a.data()[r * cols..(r + 1) * cols], &mut data[r * cols..(r + 1) * cols]);
        }
        Ok(self.record(Op::RowSoftmax, &[a], Tensor::new(a.shape().to_vec(), data)?))
    }

    /// Mean over `axis` (0 = down columns, 1 = across rows) of a rank-2 tensor.
    pub fn mean_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        let summed = self.sum_axis(a, axis)?;
        let (m, n) = (a.rows(), a.cols());
        let denom = if axis == 0 { m } else { n };
        self.scalar_mul(&summed, 1.0 / denom as f64)
    }

    /// Sum over `axis` of a rank-2 tensor; rank-1 tensors reduce over axis 0.
    pub fn sum_axis(&mut self, a: &Tensor, axis: usize) -> Result<Tensor> {
        if axis > 1 {
            return Err(Error::InvalidArg(format!("sum-over-axis: axis {axis} out of range")));
        }
        if a.shape().len() == 1 {
            if axis != 0 {
                return Err(Error::InvalidArg("sum-over-axis: rank-1 tensor has only axis 0".into()));
            }
            let total: f64 = a.data().iter().sum();
            return Ok(self.record(Op::SumAxis(0), &[a], Tensor::scalar(total)));
        }
        let (m, n) = (a.rows(), a.cols());
        let value = if axis == 0 {
            let mut out = vec![0.0; n];
            for r in 0..m {
                for c in 0..n {
                    out[c] += a.data()[r * n + c];
                }
            }
            Tensor::new(vec![1, n], out)?
        } else {
            let mut out = vec![0.0; m];
            for r in 0..m {
                out[r] = a.data()[r * n..(r + 1) * n].iter().sum();
            }
            Tensor::new(vec![m, 1], out)?
        };
        Ok(self.record(Op::SumAxis(axis), &[a], value))
    }

    /// Concatenate rank-2 tensors along `axis` (0 = stack rows, 1 = side by side).
    pub fn concat(&mut self, parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArg("concat: no inputs".into()));
        }
        if axis > 1 {
            return Err(Error::InvalidArg(format!("concat: axis {axis} out of range")));
        }
        for p in parts {
            require_rank2(p, "concat")?;
        }
        let value = if axis == 0 {
            let n = parts[0].cols();
            if parts.iter().any(|p| p.cols() != n) {
                return Err(Error::Shape { op: "concat", detail: "column counts differ".into() });
            }
            let rows = parts.iter().map(|p| p.rows()).sum();
            let mut data = Vec::with_capacity(rows * n);
            for p in parts {
                data.extend_from_slice(p.data());
            }
            Tensor::new(vec![rows, n], data)?
        } else {
            let m = parts[0].rows();
            if parts.iter().any(|p| p.rows() != m) {
                return Err(Error::Shape { op: "concat", detail: "row counts differ".into() });
            }
            let cols: usize = parts.iter().map(|p| p.cols()).sum();
            let mut data = Vec::with_capacity(m * cols);
            for r in 0..m {
                for p in parts {
                    let c = p.cols();
                    data.extend_from_slice(&p.data()[r * c..(r + 1) * c]);
                }
            }
            Tensor::new(vec![m, cols], data)?
        };
        let refs: Vec<&Tensor> = parts.to_vec();
        Ok(self.record(Op::Concat(axis), &refs, value))
    }

    /// Select rows of `a` by index; an index may repeat.
    pub fn gather(&mut self, a: &Tensor, indices: &[usize]) -> Result<Tensor> {
        let (m, n) = require_rank2(a, "index-gather")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= m) {
            return Err(Error::Index {
                op: "index-gather",
                detail: format!("row {bad} out of range for {m} rows"),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(&a.data()[i * n..(i + 1) * n]);
        }
        let value = Tensor::new(vec![indices.len(), n], data)?;
        Ok(self.record(Op::Gather(indices.to_vec()), &[a], value))
    }

    /// Add each row of `a` into `out[indices[i]]` of a zero-initialised
    /// `rows`×cols output.
    pub fn scatter_add(&mut self, a: &Tensor, indices: &[usize], rows: usize) -> Result<Tensor> {
        let (m, n) = require_rank2(a, "index-scatter-add")?;
        if m != indices.len() {
            return Err(Error::Shape {
                op: "index-scatter-add",
                detail: format!("{m} rows but {} indices", indices.len()),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::Index {
                op: "index-scatter-add",
                detail: format!("target row {bad} out of range for {rows} rows"),
            });
        }
        let mut data = vec![0.0; rows * n];
        for (r, &target) in indices.iter().enumerate() {
            for c in 0..n {
                data[target * n + c] += a.data()[r * n + c];
            }
        }
        let value = Tensor::new(vec![rows, n], data)?;
        Ok(self.record(Op::ScatterAdd { indices: indices.to_vec() }, &[a], value))
    }

    /// Mean over rows of the softmax cross-entropy between `logits` and
    /// integer `labels`. Takes raw logits; the log-softmax is fused for
    /// numerical stability.
    pub fn cross_entropy_loss(&mut self, logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let (m, c) = require_rank2(logits, "cross-entropy-loss")?;
        if labels.len() != m {
            return Err(Error::Shape {
                op: "cross-entropy-loss",
                detail: format!("{m} logit rows but {} labels", labels.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::Index {
                op: "cross-entropy-loss",
                detail: format!("label {bad} out of range for {c} classes"),
            });
        }
        let mut total = 0.0;
        for r in 0..m {
            let row = &logits.data()[r * c..(r + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[labels[r]];
        }
        let value = Tensor::new(vec![1, 1], vec![total / m as f64])?;
        Ok(self.record(Op::CrossEntropy { labels: labels.to_vec() }, &[logits], value))
    }

    // ── reverse sweeps ──────────────────────────────────────────────────

    /// Full reverse pass from a scalar loss node.
    pub fn backward(&self, loss: NodeId) -> Result<GradStore> {
        let loss_node = self.nodes.get(loss.0).ok_or(Error::UnknownNode { node: loss.0 })?;
        if !loss_node.value.is_scalar() {
            return Err(Error::NonScalarLoss { shape: loss_node.value.shape().to_vec() });
        }
        let seed = Tensor::filled(loss_node.value.shape().to_vec(), 1.0);
        Ok(self.sweep(loss, seed, NodeId(0)))
    }

    /// Gradient contribution of `source` to `boundary`: the reverse sweep is
    /// seeded with `upstream` at `source`, so the value accumulated at
    /// `boundary` covers exactly the paths between the two nodes.
    pub fn vjp_contribution(
        &self,
        source: NodeId,
        boundary: NodeId,
        upstream: &Tensor,
    ) -> Result<VjpOutcome> {
        let source_shape = self.node_shape(source)?.to_vec();
        let boundary_shape = self.node_shape(boundary)?.to_vec();
        if upstream.shape() != source_shape.as_slice() {
            return Err(Error::Shape {
                op: "vjp-contribution",
                detail: format!(
                    "upstream shape {:?} vs source shape {:?}",
                    upstream.shape(),
                    source_shape
                ),
            });
        }
        // Topological order makes a later boundary unreachable outright.
        if boundary.0 > source.0 {
            return Ok(VjpOutcome { grad: Tensor::zeros(boundary_shape), path_found: false });
        }
        let store = self.sweep(source, upstream.detached(), boundary);
        match store.get(boundary) {
            Some(g) => Ok(VjpOutcome { grad: g.detached(), path_found: true }),
            None => Ok(VjpOutcome { grad: Tensor::zeros(boundary_shape), path_found: false }),
        }
    }

    /// Reverse accumulation from `start` seeded with `seed`, ignoring nodes
    /// below `floor` (their gradients are never needed by the caller).
    fn sweep(&self, start: NodeId, seed: Tensor, floor: NodeId) -> GradStore {
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[start.0] = Some(seed);
        for id in (floor.0..=start.0).rev() {
            let Some(grad) = grads[id].take() else { continue };
            self.propagate(id, &grad, &mut grads);
            grads[id] = Some(grad);
        }
        GradStore { grads }
    }

    fn propagate(&self, id: usize, grad: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let input_value = |i: usize| -> &Tensor {
            match &node.inputs[i] {
                InputRef::Node(n) => &self.nodes[n.0].value,
                InputRef::Const(t) => t,
            }
        };
        let mut flows: Vec<(usize, Tensor)> = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul => {
                let a = input_value(0);
                let b = input_value(1);
                let (m, k) = (a.rows(), a.cols());
                let n = b.cols();
                let ga = matmul_nt(grad.data(), b.data(), m, k, n);
                let gb = matmul_tn(a.data(), grad.data(), m, k, n);
                flows.push((0, Tensor::new(vec![m, k], ga).expect("matmul grad shape")));
                flows.push((1, Tensor::new(vec![k, n], gb).expect("matmul grad shape")));
            }
            Op::Transpose => {
                let (n, m) = (node.value.rows(), node.value.cols());
                let mut ga = vec![0.0; m * n];
                for i in 0..n {
                    for j in 0..m {
                        ga[j * n + i] = grad.data()[i * m + j];
                    }
                }
                flows.push((0, Tensor::new(vec![m, n], ga).expect("transpose grad shape")));
            }
            Op::Add => {
                flows.push((0, grad.detached()));
                flows.push((1, grad.detached()));
            }
            Op::Sub => {
                flows.push((0, grad.detached()));
                let neg = grad.data().iter().map(|&v| -v).collect();
                flows.push((1, Tensor::new(grad.shape().to_vec(), neg).expect("sub grad shape")));
            }
            Op::ScalarMul(c) => {
                let ga = grad.data().iter().map(|&v| v * c).collect();
                flows.push((0, Tensor::new(grad.shape().to_vec(), ga).expect("scalar grad shape")));
            }
            Op::Mul => {
                let a = input_value(0);
                let b = input_value(1);
                let ga = grad.data().iter().zip(b.data()).map(|(&g, &v)| g * v).collect();
                let gb = grad.data().iter().zip(a.data()).map(|(&g, &v)| g * v).collect();
                flows.push((0, Tensor::new(grad.shape().to_vec(), ga).expect("mul grad shape")));
                flows.push((1, Tensor::new(grad.shape().to_vec(), gb).expect("mul grad shape")));
            }
            Op::Relu => {
                let a = input_value(0);
                let ga = grad
                    .data()
                    .iter()
                    .zip(a.data())
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                flows.push((0, Tensor::new(grad.shape().to_vec(), ga).expect("relu grad shape")));
            }
            Op::RowSoftmax => {
                let y = &node.value;
                let (rows, cols) = (y.rows(), y.cols());
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    let yr = &y.data()[r * cols..(r + 1) * cols];
                    let gr = &grad.data()[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for c in 0..cols {
                        ga[r * cols + c] = yr[c] * (gr[c] - dot);
                    }
                }
                flows.push((0, Tensor::new(y.shape().to_vec(), ga).expect("softmax grad shape")));
            }
            Op::SumAxis(axis) => {
                let a = input_value(0);
                flows.push((0, broadcast_reduction_grad(grad, a, *axis)));
            }
            Op::Concat(axis) => {
                if *axis == 0 {
                    let n = node.value.cols();
                    let mut row = 0;
                    for (i, input) in node.inputs.iter().enumerate() {
                        let rows = match input {
                            InputRef::Node(nid) => self.nodes[nid.0].value.rows(),
                            InputRef::Const(t) => t.rows(),
                        };
                        let slice = grad.data()[row * n..(row + rows) * n].to_vec();
                        flows.push((i, Tensor::new(vec![rows, n], slice).expect("concat grad")));
                        row += rows;
                    }
                } else {
                    let m = node.value.rows();
                    let total = node.value.cols();
                    let mut col = 0;
                    for (i, input) in node.inputs.iter().enumerate() {
                        let cols = match input {
                            InputRef::Node(nid) => self.nodes[nid.0].value.cols(),
                            InputRef::Const(t) => t.cols(),
                        };
                        let mut ga = Vec::with_capacity(m * cols);
                        for r in 0..m {
                            ga.extend_from_slice(&grad.data()[r * total + col..r * total + col + cols]);
                        }
                        flows.push((i, Tensor::new(vec![m, cols], ga).expect("concat grad")));
                        col += cols;
                    }
                }
            }
            Op::Gather(indices) => {
                let a = input_value(0);
                let (m, n) = (a.rows(), a.cols());
                let mut ga = vec![0.0; m * n];
                for (r, &target) in indices.iter().enumerate() {
                    for c in 0..n {
                        ga[target * n + c] += grad.data()[r * n + c];
                    }
                }
                flows.push((0, Tensor::new(vec![m, n], ga).expect("gather grad shape")));
            }
            Op::ScatterAdd { indices } => {
                let a = input_value(0);
                let n = a.cols();
                let mut ga = Vec::with_capacity(indices.len() * n);
                for &source in indices {
                    ga.extend_from_slice(&grad.data()[source * n..(source + 1) * n]);
                }
                flows.push((0, Tensor::new(vec![indices.len(), n], ga).expect("scatter grad")));
            }
            Op::CrossEntropy { labels } => {
                let logits = input_value(0);
                let (m, c) = (logits.rows(), logits.cols());
                let scale = grad.data()[0] / m as f64;
                let mut ga = vec![0.0; m * c];
                for r in 0..m {
                    let row = &logits.data()[r * c..(r + 1) * c];
                    softmax_row(row, &mut ga[r * c..(r + 1) * c]);
                    ga[r * c + labels[r]] -= 1.0;
                    for v in &mut ga[r * c..(r + 1) * c] {
                        *v *= scale;
                    }
                }
                flows.push((0, Tensor::new(vec![m, c], ga).expect("cross-entropy grad")));
            }
        }
        for (slot, contribution) in flows {
            if let InputRef::Node(target) = &node.inputs[slot] {
                accumulate(&mut grads[target.0], contribution);
            }
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, contribution: Tensor) {
    match slot {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                *e += c;
            }
        }
        None => *slot = Some(contribution),
    }
}

/// Spread a reduced gradient back over the reduced axis.
fn broadcast_reduction_grad(grad: &Tensor, input: &Tensor, axis: usize) -> Tensor {
    if input.shape().len() == 1 {
        return Tensor::filled(input.shape().to_vec(), grad.data()[0]);
    }
    let (m, n) = (input.rows(), input.cols());
    let mut out = vec![0.0; m * n];
    if axis == 0 {
        for r in 0..m {
            out[r * n..(r + 1) * n].copy_from_slice(grad.data());
        }
    } else {
        for r in 0..m {
            for c in 0..n {
                out[r * n + c] = grad.data()[r];
            }
        }
    }
    Tensor::new(input.shape().to_vec(), out).expect("reduction grad shape")
}

fn require_rank2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::Shape { op, detail: format!("expected rank 2, got {:?}", t.shape()) });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape { op, detail: format!("{:?} vs {:?}", a.shape(), b.shape()) }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn matmul_data(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

/// a[m×k] @ b[n×k]ᵀ -> m×n
fn matmul_nt(a: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[j * k + p];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// a[m×k]ᵀ @ b[m×n] -> k×n
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[i * n..(i + 1) * n];
            let orow = &mut out[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}
