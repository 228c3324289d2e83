//! Central-difference gradient oracle.

use std::collections::BTreeMap;

use super::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Worst coordinate found by [`finite_difference_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct FdReport {
    pub max_rel_error: f64,
    pub worst_leaf: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

/// Compares reverse-mode gradients of `output` against central differences
/// for every coordinate of the named leaves.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-12)`. The graph is replayed
/// through [`Graph::evaluate_upto`], so everything recorded between the
/// leaves and `output` (including inner gradient steps) is re-run.
pub fn finite_difference_check(
    graph: &mut Graph,
    output: NodeId,
    wrt: &[&str],
    step: f64,
) -> Result<FdReport> {
    check_scaled(graph, output, wrt, step, 1.0)
}

/// As [`finite_difference_check`], with the analytic gradient multiplied by
/// `analytic_scale` (fault injection).
pub fn check_scaled(
    graph: &mut Graph,
    output: NodeId,
    wrt: &[&str],
    step: f64,
    analytic_scale: f64,
) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::validation(format!("step must be positive, got {step}")));
    }
    let analytic = graph.backward(output, wrt, false)?;
    let mut report = FdReport {
        max_rel_error: 0.0,
        worst_leaf: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
    };
    for name in wrt {
        let id = graph.leaf_id(name).expect("checked by backward");
        let base = graph.value(id).clone();
        let grad = analytic[*name].value(graph).clone();
        for i in 0..base.len() {
            let f_plus = eval_perturbed(graph, output, name, &base, i, step)?;
            let f_minus = eval_perturbed(graph, output, name, &base, i, -step)?;
            let numeric = (f_plus - f_minus) / (2.0 * step);
            let a = grad.data()[i] * analytic_scale;
            let denom = a.abs().max(numeric.abs()).max(1e-12);
            let rel = (a - numeric).abs() / denom;
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst_leaf.is_empty() {
                report.max_rel_error = rel;
                report.worst_leaf = name.to_string();
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn eval_perturbed(
    graph: &Graph,
    output: NodeId,
    name: &str,
    base: &Tensor,
    index: usize,
    delta: f64,
) -> Result<f64> {
    let mut t = base.clone();
    t.data_mut()[index] += delta;
    let mut leaves = BTreeMap::new();
    leaves.insert(name.to_string(), t);
    let values = graph.evaluate_upto(&leaves, Some(output))?;
    Ok(values[output.0].item())
}
