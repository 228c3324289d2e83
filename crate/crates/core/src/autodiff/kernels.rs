//! Forward kernels and shape rules. Reductions always run in index order.

use super::{NodeId, Op};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Added under the square root of row norms so that zero rows normalize to
/// zero instead of NaN.
pub(crate) const L2_EPS: f64 = 1e-24;

fn fmt_shape(s: &[usize]) -> String {
    format!("{s:?}")
}

fn mismatch(node: usize, op: &'static str, expected: String, actual: &[usize]) -> Error {
    Error::OpShape {
        node,
        op,
        expected,
        actual: fmt_shape(actual),
    }
}

fn matrix(node: usize, op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.dims2()
        .ok_or_else(|| mismatch(node, op, "[rows, cols]".into(), t.shape()))
}

enum Bcast {
    Same,
    LeftScalar,
    RightScalar,
    RowBias,
}

fn broadcast_rule(node: usize, op: &'static str, a: &Tensor, b: &Tensor, bias: bool) -> Result<Bcast> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if a.rank() == 0 {
        Ok(Bcast::LeftScalar)
    } else if b.rank() == 0 {
        Ok(Bcast::RightScalar)
    } else if bias && a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0] {
        Ok(Bcast::RowBias)
    } else {
        Err(mismatch(node, op, fmt_shape(a.shape()), b.shape()))
    }
}

fn binary(
    node: usize,
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    bias: bool,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    Ok(match broadcast_rule(node, op, a, b, bias)? {
        Bcast::Same => a.zip_map(b, f),
        Bcast::LeftScalar => {
            let s = a.item();
            b.map(|v| f(s, v))
        }
        Bcast::RightScalar => {
            let s = b.item();
            a.map(|v| f(v, s))
        }
        Bcast::RowBias => {
            let n = b.len();
            let bd = b.data();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| f(v, bd[i % n]))
                .collect();
            Tensor::from_parts(a.shape().to_vec(), data)
        }
    })
}

fn matmul(node: usize, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = matrix(node, "matmul", a)?;
    let (k2, n) = matrix(node, "matmul", b)?;
    if k != k2 {
        return Err(mismatch(node, "matmul", format!("[{k}, _]"), b.shape()));
    }
    let ad = a.data();
    let bd = b.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

fn transpose(node: usize, a: &Tensor) -> Result<Tensor> {
    let (m, n) = matrix(node, "transpose", a)?;
    let ad = a.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = ad[i * n + j];
        }
    }
    Ok(Tensor::from_parts(vec![n, m], out))
}

fn rowwise(
    node: usize,
    op: &'static str,
    a: &Tensor,
    f: impl Fn(&[f64], &mut [f64]),
) -> Result<Tensor> {
    let (m, n) = matrix(node, op, a)?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        f(&a.data()[i * n..(i + 1) * n], &mut out[i * n..(i + 1) * n]);
    }
    Ok(Tensor::from_parts(vec![m, n], out))
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total = x.iter().fold(0.0, |acc, &v| acc + (v - max).exp());
    let lse = max + total.ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

fn l2_normalize_row(x: &[f64], out: &mut [f64]) {
    let sq = x.iter().fold(0.0, |acc, &v| acc + v * v);
    let norm = (sq + L2_EPS).sqrt();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v / norm;
    }
}

/// Computes the value of `op` given its parents' values.
pub(crate) fn compute<'a>(
    node: usize,
    op: &Op,
    get: impl Fn(NodeId) -> &'a Tensor,
) -> Result<Tensor> {
    let out = match op {
        Op::Leaf(_) | Op::Const => {
            return Err(Error::Graph(format!("node {node}: leaves carry their own values")))
        }
        Op::Add(a, b) => binary(node, "add", get(*a), get(*b), true, |x, y| x + y)?,
        Op::Sub(a, b) => binary(node, "sub", get(*a), get(*b), true, |x, y| x - y)?,
        Op::Mul(a, b) => binary(node, "mul", get(*a), get(*b), false, |x, y| x * y)?,
        Op::Scale(a, c) => {
            let c = *c;
            get(*a).map(|v| v * c)
        }
        Op::MatMul(a, b) => matmul(node, get(*a), get(*b))?,
        Op::Transpose(a) => transpose(node, get(*a))?,
        Op::Tanh(a) => get(*a).map(f64::tanh),
        Op::Relu(a) => get(*a).map(|v| if v > 0.0 { v } else { 0.0 }),
        Op::Step(a) => get(*a).map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
        Op::Exp(a) => get(*a).map(f64::exp),
        Op::Log(a) => get(*a).map(f64::ln),
        Op::Recip(a) => get(*a).map(|v| 1.0 / v),
        Op::Sqrt(a) => get(*a).map(f64::sqrt),
        Op::Sum(a) => Tensor::scalar(get(*a).sum()),
        Op::Mean(a) => {
            let t = get(*a);
            Tensor::scalar(t.sum() / t.len() as f64)
        }
        Op::SumRows(a) => {
            let t = get(*a);
            let (m, n) = matrix(node, "sum_rows", t)?;
            let data = (0..m)
                .map(|i| t.data()[i * n..(i + 1) * n].iter().fold(0.0, |s, &v| s + v))
                .collect();
            Tensor::from_parts(vec![m], data)
        }
        Op::SumCols(a) => {
            let t = get(*a);
            let (m, n) = matrix(node, "sum_cols", t)?;
            let mut data = vec![0.0; n];
            for i in 0..m {
                for (d, &v) in data.iter_mut().zip(&t.data()[i * n..(i + 1) * n]) {
                    *d += v;
                }
            }
            Tensor::from_parts(vec![n], data)
        }
        Op::ExpandCols(a, cols) => {
            let t = get(*a);
            if t.rank() != 1 {
                return Err(mismatch(node, "expand_cols", "[rows]".into(), t.shape()));
            }
            let data = t
                .data()
                .iter()
                .flat_map(|&v| std::iter::repeat_n(v, *cols))
                .collect();
            Tensor::from_parts(vec![t.len(), *cols], data)
        }
        Op::ExpandRows(a, rows) => {
            let t = get(*a);
            if t.rank() != 1 {
                return Err(mismatch(node, "expand_rows", "[cols]".into(), t.shape()));
            }
            let mut data = Vec::with_capacity(rows * t.len());
            for _ in 0..*rows {
                data.extend_from_slice(t.data());
            }
            Tensor::from_parts(vec![*rows, t.len()], data)
        }
        Op::Broadcast(a, shape) => {
            let t = get(*a);
            if t.rank() != 0 {
                return Err(mismatch(node, "broadcast", "[]".into(), t.shape()));
            }
            if shape.contains(&0) {
                return Err(Error::Shape(format!("node {node}: broadcast to {shape:?}")));
            }
            Tensor::full(shape, t.item())
        }
        Op::Softmax(a) => rowwise(node, "softmax", get(*a), softmax_row)?,
        Op::LogSoftmax(a) => rowwise(node, "log_softmax", get(*a), log_softmax_row)?,
        Op::L2Normalize(a) => rowwise(node, "l2_normalize", get(*a), l2_normalize_row)?,
        Op::Concat(parts) => {
            let first = parts
                .first()
                .ok_or_else(|| Error::Graph(format!("node {node}: concat of nothing")))?;
            let (_, n) = matrix(node, "concat", get(*first))?;
            let mut rows = 0;
            let mut data = Vec::new();
            for p in parts {
                let t = get(*p);
                let (m, n2) = matrix(node, "concat", t)?;
                if n2 != n {
                    return Err(mismatch(node, "concat", format!("[_, {n}]"), t.shape()));
                }
                rows += m;
                data.extend_from_slice(t.data());
            }
            Tensor::from_parts(vec![rows, n], data)
        }
        Op::IndexSelect(a, idx) => {
            let t = get(*a);
            let (m, n) = matrix(node, "index_select", t)?;
            if idx.is_empty() {
                return Err(Error::Graph(format!("node {node}: empty index_select")));
            }
            let mut data = Vec::with_capacity(idx.len() * n);
            for &r in idx {
                if r >= m {
                    return Err(Error::Graph(format!(
                        "node {node}: row {r} out of range for {m} rows"
                    )));
                }
                data.extend_from_slice(&t.data()[r * n..(r + 1) * n]);
            }
            Tensor::from_parts(vec![idx.len(), n], data)
        }
        Op::ScatterRows(a, idx, total) => {
            let t = get(*a);
            let (m, n) = matrix(node, "scatter_rows", t)?;
            if m != idx.len() {
                return Err(mismatch(node, "scatter_rows", format!("[{}, _]", idx.len()), t.shape()));
            }
            let mut data = vec![0.0; total * n];
            for (i, &r) in idx.iter().enumerate() {
                if r >= *total {
                    return Err(Error::Graph(format!(
                        "node {node}: row {r} out of range for {total} rows"
                    )));
                }
                for j in 0..n {
                    data[r * n + j] += t.data()[i * n + j];
                }
            }
            Tensor::from_parts(vec![*total, n], data)
        }
    };
    Ok(out)
}
