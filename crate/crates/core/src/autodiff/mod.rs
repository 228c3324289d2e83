//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] is an append-only list of nodes. Values are computed eagerly as
//! nodes are added, and [`Graph::evaluate`] replays the whole list with new
//! leaf values. Every vector-Jacobian product is itself expressed with graph
//! ops, so gradients produced with `create_graph` can be differentiated again.
//!
//! Broadcasting is limited to rank-0 scalars against any tensor and a rank-1
//! bias added to every row of a matrix.

mod check;
mod kernels;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use check::{check_scaled, finite_difference_check, FdReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation recorded at a node. Rank-2 "row-wise" ops act on each row of a
/// `[rows, cols]` matrix independently.
#[derive(Clone, Debug)]
pub enum Op {
    Leaf(String),
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Tanh(NodeId),
    Relu(NodeId),
    /// Heaviside step `1[x > 0]`; derivative zero everywhere.
    Step(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Recip(NodeId),
    Sqrt(NodeId),
    Sum(NodeId),
    Mean(NodeId),
    /// `[m, n] -> [m]`
    SumRows(NodeId),
    /// `[m, n] -> [n]`
    SumCols(NodeId),
    /// `[m] -> [m, n]`, copying each entry across a row.
    ExpandCols(NodeId, usize),
    /// `[n] -> [m, n]`, copying the vector into every row.
    ExpandRows(NodeId, usize),
    /// Rank-0 scalar to any shape.
    Broadcast(NodeId, Vec<usize>),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    L2Normalize(NodeId),
    /// Stack matrices with equal column counts along rows.
    Concat(Vec<NodeId>),
    IndexSelect(NodeId, Vec<usize>),
    /// Adjoint of `IndexSelect`: adds rows into a zero matrix with `rows` rows.
    ScatterRows(NodeId, Vec<usize>, usize),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf(_) => "leaf",
            Op::Const => "const",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Tanh(_) => "tanh",
            Op::Relu(_) => "relu",
            Op::Step(_) => "step",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Recip(_) => "recip",
            Op::Sqrt(_) => "sqrt",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::SumRows(_) => "sum_rows",
            Op::SumCols(_) => "sum_cols",
            Op::ExpandCols(..) => "expand_cols",
            Op::ExpandRows(..) => "expand_rows",
            Op::Broadcast(..) => "broadcast",
            Op::Softmax(_) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::L2Normalize(_) => "l2_normalize",
            Op::Concat(_) => "concat",
            Op::IndexSelect(..) => "index_select",
            Op::ScatterRows(..) => "scatter_rows",
        }
    }

    pub fn parents(&self) -> Vec<NodeId> {
        match self {
            Op::Leaf(_) | Op::Const => Vec::new(),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![*a, *b],
            Op::Scale(a, _)
            | Op::Transpose(a)
            | Op::Tanh(a)
            | Op::Relu(a)
            | Op::Step(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Recip(a)
            | Op::Sqrt(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::ExpandCols(a, _)
            | Op::ExpandRows(a, _)
            | Op::Broadcast(a, _)
            | Op::Softmax(a)
            | Op::LogSoftmax(a)
            | Op::L2Normalize(a)
            | Op::IndexSelect(a, _)
            | Op::ScatterRows(a, _, _) => vec![*a],
            Op::Concat(xs) => xs.clone(),
        }
    }
}

/// Names of every differentiable op kind, in a fixed order. Used by coverage
/// reports.
pub const DIFFERENTIABLE_OPS: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scale",
    "matmul",
    "transpose",
    "tanh",
    "relu",
    "exp",
    "log",
    "recip",
    "sqrt",
    "sum",
    "mean",
    "sum_rows",
    "sum_cols",
    "expand_cols",
    "expand_rows",
    "broadcast",
    "softmax",
    "log_softmax",
    "l2_normalize",
    "concat",
    "index_select",
    "scatter_rows",
];

#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub op: Op,
    pub value: Tensor,
}

/// Gradient returned by [`Graph::backward`].
#[derive(Clone, Debug)]
pub enum Grad {
    /// Differentiable node appended to the graph (`create_graph = true`).
    Node(NodeId),
    Value(Tensor),
}

impl Grad {
    pub fn node(&self) -> Option<NodeId> {
        match self {
            Grad::Node(id) => Some(*id),
            Grad::Value(_) => None,
        }
    }

    pub fn value<'a>(&'a self, graph: &'a Graph) -> &'a Tensor {
        match self {
            Grad::Node(id) => graph.value(*id),
            Grad::Value(t) => t,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaves: BTreeMap<String, NodeId>,
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

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    pub fn leaf_id(&self, name: &str) -> Option<NodeId> {
        self.leaves.get(name).copied()
    }

    pub fn leaves(&self) -> &BTreeMap<String, NodeId> {
        &self.leaves
    }

    /// Drops every node from `len` onwards. Leaves registered after `len` are
    /// forgotten too.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
        self.leaves.retain(|_, id| id.0 < len);
    }

    pub fn leaf(&mut self, name: impl Into<String>, value: Tensor) -> Result<NodeId> {
        let name = name.into();
        if self.leaves.contains_key(&name) {
            return Err(Error::Graph(format!("duplicate leaf name '{name}'")));
        }
        let id = self.push_value(Op::Leaf(name.clone()), value);
        self.leaves.insert(name, id);
        Ok(id)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_value(Op::Const, value)
    }

    pub fn scalar(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    fn push_value(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { id, op, value });
        id
    }

    fn push(&mut self, op: Op) -> Result<NodeId> {
        let id = NodeId(self.nodes.len());
        for p in op.parents() {
            if p.0 >= id.0 {
                return Err(Error::Graph(format!(
                    "{} at node {} refers to missing node {}",
                    op.name(),
                    id.0,
                    p.0
                )));
            }
        }
        let value = kernels::compute(id.0, &op, |p| &self.nodes[p.0].value)?;
        Ok(self.push_value(op, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: NodeId) -> Result<NodeId> {
        self.scale(a, -1.0)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    pub fn step(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Step(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a))
    }

    pub fn recip(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Recip(a))
    }

    pub fn sqrt(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sqrt(a))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean(a))
    }

    pub fn sum_rows(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumRows(a))
    }

    pub fn sum_cols(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::SumCols(a))
    }

    pub fn expand_cols(&mut self, a: NodeId, cols: usize) -> Result<NodeId> {
        self.push(Op::ExpandCols(a, cols))
    }

    pub fn expand_rows(&mut self, a: NodeId, rows: usize) -> Result<NodeId> {
        self.push(Op::ExpandRows(a, rows))
    }

    pub fn broadcast(&mut self, a: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        self.push(Op::Broadcast(a, shape))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::LogSoftmax(a))
    }

    pub fn l2_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::L2Normalize(a))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.push(Op::Concat(parts.to_vec()))
    }

    pub fn index_select(&mut self, a: NodeId, rows: Vec<usize>) -> Result<NodeId> {
        self.push(Op::IndexSelect(a, rows))
    }

    pub fn scatter_rows(&mut self, a: NodeId, rows: Vec<usize>, total: usize) -> Result<NodeId> {
        self.push(Op::ScatterRows(a, rows, total))
    }

    /// Dot product of two equally shaped tensors.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let p = self.mul(a, b)?;
        self.sum(p)
    }

    /// Recomputes every node up to and including `upto` (or all nodes) with
    /// the given leaf values. Leaves missing from `leaf_values` keep their
    /// recorded value.
    pub fn evaluate_upto(
        &self,
        leaf_values: &BTreeMap<String, Tensor>,
        upto: Option<NodeId>,
    ) -> Result<Vec<Tensor>> {
        for name in leaf_values.keys() {
            if !self.leaves.contains_key(name) {
                return Err(Error::Graph(format!("unknown leaf '{name}'")));
            }
        }
        let end = upto.map_or(self.nodes.len(), |id| id.0 + 1);
        let mut values: Vec<Tensor> = Vec::with_capacity(end);
        for node in &self.nodes[..end] {
            let v = match &node.op {
                Op::Leaf(name) => match leaf_values.get(name) {
                    Some(t) => {
                        if t.shape() != node.value.shape() {
                            return Err(Error::OpShape {
                                node: node.id.0,
                                op: "leaf",
                                expected: format!("{:?}", node.value.shape()),
                                actual: format!("{:?}", t.shape()),
                            });
                        }
                        t.clone()
                    }
                    None => node.value.clone(),
                },
                Op::Const => node.value.clone(),
                op => kernels::compute(node.id.0, op, |p| &values[p.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    pub fn evaluate(&self, leaf_values: &BTreeMap<String, Tensor>) -> Result<Vec<Tensor>> {
        self.evaluate_upto(leaf_values, None)
    }

    /// Adjoint nodes of `output` with respect to arbitrary nodes `wrt`.
    ///
    /// Every returned id is a differentiable node appended to the graph.
    /// Nodes in `wrt` that `output` does not depend on get a zero constant.
    pub fn grad_nodes(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<NodeId>> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Graph(format!("unknown output node {}", output.0)));
        }
        if self.value(output).len() != 1 {
            return Err(Error::Graph(format!(
                "backward needs a scalar output, node {} has shape {:?}",
                output.0,
                self.shape(output)
            )));
        }
        let end = output.0 + 1;
        let mut depends = vec![false; end];
        for w in wrt {
            if w.0 < end {
                depends[w.0] = true;
            }
        }
        let start = wrt.iter().map(|w| w.0).min().unwrap_or(end);
        for i in start..end {
            if !depends[i] {
                depends[i] = self.nodes[i]
                    .op
                    .parents()
                    .iter()
                    .any(|p| p.0 >= start && depends[p.0]);
            }
        }

        let mut adjoint: Vec<Option<NodeId>> = vec![None; end];
        if depends[output.0] {
            let seed = Tensor::full(self.shape(output), 1.0);
            adjoint[output.0] = Some(self.constant(seed));
        }
        for i in (start..end).rev() {
            let Some(g) = adjoint[i] else { continue };
            if !depends[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let contributions = self.vjp(NodeId(i), &op, g, &depends)?;
            for (p, c) in contributions {
                adjoint[p.0] = Some(match adjoint[p.0] {
                    None => c,
                    Some(prev) => self.add(prev, c)?,
                });
            }
        }

        wrt.iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let z = Tensor::zeros(self.shape(*w));
                    Ok(self.constant(z))
                }
            })
            .collect()
    }

    /// Plain-tensor gradients; the graph is left unchanged.
    pub fn grad_values(&mut self, output: NodeId, wrt: &[NodeId]) -> Result<Vec<Tensor>> {
        let mark = self.nodes.len();
        let ids = self.grad_nodes(output, wrt);
        let out = ids.map(|ids| ids.iter().map(|id| self.value(*id).clone()).collect());
        self.truncate(mark);
        out
    }

    /// Gradients of a scalar `output` with respect to named leaves.
    ///
    /// With `create_graph` the gradients are new differentiable nodes;
    /// otherwise plain tensors and the graph is left unchanged.
    pub fn backward(
        &mut self,
        output: NodeId,
        wrt: &[&str],
        create_graph: bool,
    ) -> Result<BTreeMap<String, Grad>> {
        let ids = wrt
            .iter()
            .map(|name| {
                self.leaf_id(name)
                    .ok_or_else(|| Error::Graph(format!("unknown leaf '{name}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let grads: Vec<Grad> = if create_graph {
            self.grad_nodes(output, &ids)?
                .into_iter()
                .map(Grad::Node)
                .collect()
        } else {
            self.grad_values(output, &ids)?
                .into_iter()
                .map(Grad::Value)
                .collect()
        };
        Ok(wrt.iter().map(|s| s.to_string()).zip(grads).collect())
    }

    /// Sums `g` (shaped like the broadcast result) back down to `target`'s
    /// shape.
    fn unbroadcast(&mut self, g: NodeId, target: &[usize]) -> Result<NodeId> {
        let gshape = self.shape(g).to_vec();
        if gshape == target {
            Ok(g)
        } else if target.is_empty() {
            self.sum(g)
        } else if target.len() == 1 && gshape.len() == 2 && gshape[1] == target[0] {
            self.sum_cols(g)
        } else {
            Err(Error::Shape(format!(
                "cannot reduce gradient {gshape:?} to {target:?}"
            )))
        }
    }

    /// Vector-Jacobian products of node `id` for every parent that needs one.
    fn vjp(
        &mut self,
        id: NodeId,
        op: &Op,
        g: NodeId,
        depends: &[bool],
    ) -> Result<Vec<(NodeId, NodeId)>> {
        let needs = |p: &NodeId| depends[p.0];
        let y = id;
        let mut out = Vec::new();
        match op {
            Op::Leaf(_) | Op::Const | Op::Step(_) => {}
            Op::Add(a, b) => {
                if needs(a) {
                    let s = self.shape(*a).to_vec();
                    out.push((*a, self.unbroadcast(g, &s)?));
                }
                if needs(b) {
                    let s = self.shape(*b).to_vec();
                    out.push((*b, self.unbroadcast(g, &s)?));
                }
            }
            Op::Sub(a, b) => {
                if needs(a) {
                    let s = self.shape(*a).to_vec();
                    out.push((*a, self.unbroadcast(g, &s)?));
                }
                if needs(b) {
                    let s = self.shape(*b).to_vec();
                    let r = self.unbroadcast(g, &s)?;
                    out.push((*b, self.neg(r)?));
                }
            }
            Op::Mul(a, b) => {
                if needs(a) {
                    let s = self.shape(*a).to_vec();
                    let gb = self.mul(g, *b)?;
                    out.push((*a, self.unbroadcast(gb, &s)?));
                }
                if needs(b) {
                    let s = self.shape(*b).to_vec();
                    let ga = self.mul(g, *a)?;
                    out.push((*b, self.unbroadcast(ga, &s)?));
                }
            }
            Op::Scale(a, c) => {
                if needs(a) {
                    out.push((*a, self.scale(g, *c)?));
                }
            }
            Op::MatMul(a, b) => {
                if needs(a) {
                    let bt = self.transpose(*b)?;
                    out.push((*a, self.matmul(g, bt)?));
                }
                if needs(b) {
                    let at = self.transpose(*a)?;
                    out.push((*b, self.matmul(at, g)?));
                }
            }
            Op::Transpose(a) => {
                if needs(a) {
                    out.push((*a, self.transpose(g)?));
                }
            }
            Op::Tanh(a) => {
                if needs(a) {
                    // g * (1 - y^2)
                    let yy = self.mul(y, y)?;
                    let gyy = self.mul(g, yy)?;
                    out.push((*a, self.sub(g, gyy)?));
                }
            }
            Op::Relu(a) => {
                if needs(a) {
                    let mask = self.step(*a)?;
                    out.push((*a, self.mul(g, mask)?));
                }
            }
            Op::Exp(a) => {
                if needs(a) {
                    out.push((*a, self.mul(g, y)?));
                }
            }
            Op::Log(a) => {
                if needs(a) {
                    let r = self.recip(*a)?;
                    out.push((*a, self.mul(g, r)?));
                }
            }
            Op::Recip(a) => {
                if needs(a) {
                    // -g * y^2
                    let yy = self.mul(y, y)?;
                    let gyy = self.mul(g, yy)?;
                    out.push((*a, self.neg(gyy)?));
                }
            }
            Op::Sqrt(a) => {
                if needs(a) {
                    // g / (2 y)
                    let r = self.recip(y)?;
                    let gr = self.mul(g, r)?;
                    out.push((*a, self.scale(gr, 0.5)?));
                }
            }
            Op::Sum(a) => {
                if needs(a) {
                    let s = self.shape(*a).to_vec();
                    out.push((*a, self.broadcast_or_same(g, s)?));
                }
            }
            Op::Mean(a) => {
                if needs(a) {
                    let s = self.shape(*a).to_vec();
                    let n = self.value(*a).len() as f64;
                    let gs = self.scale(g, 1.0 / n)?;
                    out.push((*a, self.broadcast_or_same(gs, s)?));
                }
            }
            Op::SumRows(a) => {
                if needs(a) {
                    let cols = self.shape(*a)[1];
                    out.push((*a, self.expand_cols(g, cols)?));
                }
            }
            Op::SumCols(a) => {
                if needs(a) {
                    let rows = self.shape(*a)[0];
                    out.push((*a, self.expand_rows(g, rows)?));
                }
            }
            Op::ExpandCols(a, _) => {
                if needs(a) {
                    out.push((*a, self.sum_rows(g)?));
                }
            }
            Op::ExpandRows(a, _) => {
                if needs(a) {
                    out.push((*a, self.sum_cols(g)?));
                }
            }
            Op::Broadcast(a, _) => {
                if needs(a) {
                    out.push((*a, self.sum(g)?));
                }
            }
            Op::Softmax(a) => {
                if needs(a) {
                    // y * (g - rowsum(g * y))
                    let cols = self.shape(*a)[1];
                    let gy = self.mul(g, y)?;
                    let rs = self.sum_rows(gy)?;
                    let rse = self.expand_cols(rs, cols)?;
                    let d = self.sub(g, rse)?;
                    out.push((*a, self.mul(y, d)?));
                }
            }
            Op::LogSoftmax(a) => {
                if needs(a) {
                    // g - softmax(a) * rowsum(g)
                    let cols = self.shape(*a)[1];
                    let p = self.exp(y)?;
                    let rs = self.sum_rows(g)?;
                    let rse = self.expand_cols(rs, cols)?;
                    let pr = self.mul(p, rse)?;
                    out.push((*a, self.sub(g, pr)?));
                }
            }
            Op::L2Normalize(a) => {
                if needs(a) {
                    // (g - y * rowsum(g * y)) / norm(a)
                    let cols = self.shape(*a)[1];
                    let gy = self.mul(g, y)?;
                    let rs = self.sum_rows(gy)?;
                    let rse = self.expand_cols(rs, cols)?;
                    let yr = self.mul(y, rse)?;
                    let d = self.sub(g, yr)?;
                    let aa = self.mul(*a, *a)?;
                    let sq = self.sum_rows(aa)?;
                    let eps = self.scalar(kernels::L2_EPS);
                    let sq = self.add(sq, eps)?;
                    let norm = self.sqrt(sq)?;
                    let inv = self.recip(norm)?;
                    let inv = self.expand_cols(inv, cols)?;
                    out.push((*a, self.mul(d, inv)?));
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let rows = self.shape(*p)[0];
                    if needs(p) {
                        let idx: Vec<usize> = (offset..offset + rows).collect();
                        out.push((*p, self.index_select(g, idx)?));
                    }
                    offset += rows;
                }
            }
            Op::IndexSelect(a, rows) => {
                if needs(a) {
                    let total = self.shape(*a)[0];
                    out.push((*a, self.scatter_rows(g, rows.clone(), total)?));
                }
            }
            Op::ScatterRows(a, rows, _) => {
                if needs(a) {
                    out.push((*a, self.index_select(g, rows.clone())?));
                }
            }
        }
        Ok(out)
    }

    fn broadcast_or_same(&mut self, g: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        if shape.is_empty() {
            Ok(g)
        } else {
            self.broadcast(g, shape)
        }
    }
}

#[cfg(test)]
mod tests;
