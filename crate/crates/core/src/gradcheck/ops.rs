//! One small randomized graph per differentiable op kind.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A scalar-output graph exercising one op, plus the leaves to check.
pub struct OpCase {
    pub graph: Graph,
    pub output: NodeId,
    pub leaves: Vec<&'static str>,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_parts(shape.to_vec(), data)
}

/// Values in `±[lo, hi)`, keeping clear of zero (relu kink, tiny gradients).
fn signed(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let mut t = uniform(rng, shape, lo, hi);
    for v in t.data_mut() {
        if rng.random_bool(0.5) {
            *v = -*v;
        }
    }
    t
}

/// `sum(y * C)` for a random constant `C` of matching shape.
fn weighted_sum(g: &mut Graph, rng: &mut ChaCha8Rng, y: NodeId) -> Result<NodeId> {
    let shape = g.shape(y).to_vec();
    let c = g.constant(signed(rng, &shape, 0.5, 1.5));
    let p = g.mul(y, c)?;
    g.sum(p)
}

/// Builds the case for `op` (one of [`crate::autodiff::DIFFERENTIABLE_OPS`]).
pub fn op_case(op: &str, seed: u64) -> Result<OpCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new();
    let rng = &mut rng;
    let (output, leaves): (NodeId, Vec<&'static str>) = match op {
        "add" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let b = g.leaf("b", signed(rng, &[4], 0.1, 1.0))?;
            let s = g.add(a, b)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a", "b"])
        }
        "sub" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let b = g.leaf("b", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.sub(a, b)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a", "b"])
        }
        "mul" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let b = g.leaf("b", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.mul(a, b)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a", "b"])
        }
        "scale" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.scale(a, -2.5)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "matmul" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let b = g.leaf("b", signed(rng, &[4, 2], 0.1, 1.0))?;
            let s = g.matmul(a, b)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a", "b"])
        }
        "transpose" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.transpose(a)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "tanh" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.5))?;
            let s = g.tanh(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "relu" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.5))?;
            let s = g.relu(a)?;
            let s = g.mul(s, s)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "exp" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.exp(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "log" => {
            let a = g.leaf("a", uniform(rng, &[3, 4], 0.5, 2.0))?;
            let s = g.log(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "recip" => {
            let a = g.leaf("a", uniform(rng, &[3, 4], 0.5, 2.0))?;
            let s = g.recip(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "sqrt" => {
            let a = g.leaf("a", uniform(rng, &[3, 4], 0.5, 2.0))?;
            let s = g.sqrt(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "sum" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let t = g.tanh(a)?;
            let s = g.sum(t)?;
            (g.mul(s, s)?, vec!["a"])
        }
        "mean" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let t = g.tanh(a)?;
            let s = g.mean(t)?;
            let out = g.mul(s, s)?;
            (g.add(out, s)?, vec!["a"])
        }
        "sum_rows" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.sum_rows(a)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "sum_cols" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.sum_cols(a)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "expand_cols" => {
            let a = g.leaf("a", signed(rng, &[3], 0.1, 1.0))?;
            let s = g.expand_cols(a, 4)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "expand_rows" => {
            let a = g.leaf("a", signed(rng, &[4], 0.1, 1.0))?;
            let s = g.expand_rows(a, 3)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "broadcast" => {
            let a = g.leaf("a", Tensor::scalar(rng.random_range(0.2..0.8)))?;
            let s = g.broadcast(a, vec![3, 4])?;
            let c = g.constant(signed(rng, &[3, 4], 0.5, 1.5));
            let s = g.mul(s, c)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "softmax" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 2.0))?;
            let s = g.softmax(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "log_softmax" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 2.0))?;
            let s = g.log_softmax(a)?;
            (weighted_sum(&mut g, rng, s)?, vec!["a"])
        }
        "l2_normalize" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let b = g.leaf("b", signed(rng, &[3, 4], 0.1, 1.0))?;
            let na = g.l2_normalize(a)?;
            let nb = g.l2_normalize(b)?;
            (g.dot(na, nb)?, vec!["a", "b"])
        }
        "concat" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let b = g.leaf("b", signed(rng, &[2, 4], 0.1, 1.0))?;
            let s = g.concat(&[a, b])?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a", "b"])
        }
        "index_select" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.index_select(a, vec![2, 0, 2])?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        "scatter_rows" => {
            let a = g.leaf("a", signed(rng, &[3, 4], 0.1, 1.0))?;
            let s = g.scatter_rows(a, vec![1, 3, 1], 4)?;
            let t = g.tanh(s)?;
            (weighted_sum(&mut g, rng, t)?, vec!["a"])
        }
        other => return Err(Error::validation(format!("unknown op kind '{other}'"))),
    };
    Ok(OpCase {
        graph: g,
        output,
        leaves,
    })
}
