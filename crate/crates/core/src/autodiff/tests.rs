use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::gradcheck::op_case;

fn scalar_leaf(g: &mut Graph, name: &str, v: f64) -> NodeId {
    g.leaf(name, Tensor::scalar(v)).unwrap()
}

#[test]
fn square_evaluates_and_differentiates() {
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 3.0);
    let y = g.mul(x, x).unwrap();
    assert_eq!(g.value(y).item(), 9.0);
    let grads = g.backward(y, &["x"], false).unwrap();
    assert_eq!(grads["x"].value(&g).item(), 6.0);
}

#[test]
fn softmax_of_zeros_is_uniform() {
    let mut g = Graph::new();
    let x = g.leaf("x", Tensor::matrix(1, 3, vec![0.0; 3]).unwrap()).unwrap();
    let y = g.softmax(x).unwrap();
    for &p in g.value(y).data() {
        assert!((p - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn mean_of_ones() {
    let mut g = Graph::new();
    let x = g.leaf("x", Tensor::full(&[2, 2], 1.0)).unwrap();
    let y = g.mean(x).unwrap();
    assert_eq!(g.value(y).item(), 1.0);
}

#[test]
fn nested_backward_gives_second_derivative_of_cube() {
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 2.0);
    let xx = g.mul(x, x).unwrap();
    let y = g.mul(xx, x).unwrap();
    let d1 = g.grad_nodes(y, &[x]).unwrap()[0];
    assert_eq!(g.value(d1).item(), 12.0);
    let d2 = g.grad_nodes(d1, &[x]).unwrap()[0];
    assert_eq!(g.value(d2).item(), 12.0);
}

#[test]
fn second_derivatives_match_closed_forms() {
    for &x0 in &[-1.3, -0.2, 0.4, 1.7] {
        // x^3 -> 6x
        let mut g = Graph::new();
        let x = scalar_leaf(&mut g, "x", x0);
        let xx = g.mul(x, x).unwrap();
        let y = g.mul(xx, x).unwrap();
        let d1 = g.grad_nodes(y, &[x]).unwrap()[0];
        let d2 = g.grad_nodes(d1, &[x]).unwrap()[0];
        assert!((g.value(d2).item() - 6.0 * x0).abs() < 1e-8);

        // exp(x) -> exp(x)
        let mut g = Graph::new();
        let x = scalar_leaf(&mut g, "x", x0);
        let y = g.exp(x).unwrap();
        let d1 = g.grad_nodes(y, &[x]).unwrap()[0];
        let d2 = g.grad_nodes(d1, &[x]).unwrap()[0];
        assert!((g.value(d2).item() - x0.exp()).abs() < 1e-8);

        // log(1 + x^2) -> 2(1 - x^2) / (1 + x^2)^2
        let mut g = Graph::new();
        let x = scalar_leaf(&mut g, "x", x0);
        let one = g.scalar(1.0);
        let xx = g.mul(x, x).unwrap();
        let s = g.add(one, xx).unwrap();
        let y = g.log(s).unwrap();
        let d1 = g.grad_nodes(y, &[x]).unwrap()[0];
        let d2 = g.grad_nodes(d1, &[x]).unwrap()[0];
        let q = 1.0 + x0 * x0;
        let expected = 2.0 * (1.0 - x0 * x0) / (q * q);
        assert!((g.value(d2).item() - expected).abs() < 1e-8);
    }
}

#[test]
fn tanh_second_derivative_matches_closed_form() {
    let x0: f64 = 0.7;
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", x0);
    let y = g.tanh(x).unwrap();
    let d1 = g.grad_nodes(y, &[x]).unwrap()[0];
    let d2 = g.grad_nodes(d1, &[x]).unwrap()[0];
    let t = x0.tanh();
    assert!((g.value(d2).item() - (-2.0 * t * (1.0 - t * t))).abs() < 1e-12);
}

#[test]
fn l2_normalize_dot_matches_finite_differences() {
    let mut case = op_case("l2_normalize", 11).unwrap();
    let report =
        finite_difference_check(&mut case.graph, case.output, &case.leaves, 1e-5).unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");
}

#[test]
fn fd_check_on_square_is_tight() {
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 3.0);
    let y = g.mul(x, x).unwrap();
    let r = finite_difference_check(&mut g, y, &["x"], 1e-5).unwrap();
    assert!(r.max_rel_error < 1e-9, "{r:?}");
}

#[test]
fn fd_check_rejects_bad_step() {
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 3.0);
    let y = g.mul(x, x).unwrap();
    assert!(finite_difference_check(&mut g, y, &["x"], 0.0).is_err());
}

#[test]
fn backward_needs_scalar_output_and_known_leaf() {
    let mut g = Graph::new();
    let x = g.leaf("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
    let y = g.tanh(x).unwrap();
    assert!(matches!(g.backward(y, &["x"], false), Err(Error::Graph(_))));
    let s = g.sum(y).unwrap();
    assert!(matches!(g.backward(s, &["nope"], false), Err(Error::Graph(_))));
}

#[test]
fn shape_mismatch_names_the_node() {
    let mut g = Graph::new();
    let a = g.leaf("a", Tensor::zeros(&[2, 3])).unwrap();
    let b = g.leaf("b", Tensor::zeros(&[2, 3])).unwrap();
    match g.matmul(a, b) {
        Err(Error::OpShape { node, op, .. }) => {
            assert_eq!(node, 2);
            assert_eq!(op, "matmul");
        }
        other => panic!("expected shape error, got {other:?}"),
    }
    let c = g.leaf("c", Tensor::zeros(&[3, 2])).unwrap();
    assert!(g.add(a, c).is_err());
}

#[test]
fn evaluate_rejects_wrong_leaf_shape() {
    let mut g = Graph::new();
    let a = g.leaf("a", Tensor::zeros(&[2, 3])).unwrap();
    let _ = g.tanh(a).unwrap();
    let mut leaves = BTreeMap::new();
    leaves.insert("a".to_string(), Tensor::zeros(&[3, 2]));
    assert!(matches!(g.evaluate(&leaves), Err(Error::OpShape { .. })));
}

#[test]
fn evaluate_replays_with_new_leaves() {
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 3.0);
    let y = g.mul(x, x).unwrap();
    let d = g.grad_nodes(y, &[x]).unwrap()[0];
    let mut leaves = BTreeMap::new();
    leaves.insert("x".to_string(), Tensor::scalar(5.0));
    let v = g.evaluate(&leaves).unwrap();
    assert_eq!(v[y.index()].item(), 25.0);
    assert_eq!(v[d.index()].item(), 10.0);
}

#[test]
fn evaluation_is_bitwise_deterministic() {
    let case = op_case("matmul", 3).unwrap();
    let a = case.graph.evaluate(&BTreeMap::new()).unwrap();
    let b = case.graph.evaluate(&BTreeMap::new()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.bitwise_eq(y));
    }
    // Replay agrees with the eagerly computed values too.
    for (node, v) in case.graph.nodes().iter().zip(&a) {
        assert!(node.value.bitwise_eq(v));
    }
}

#[test]
fn gradient_accumulation_is_linear() {
    // f = x*x, h = 3*x; d(f + h) = df + dh
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 2.0);
    let f = g.mul(x, x).unwrap();
    let h = g.scale(x, 3.0).unwrap();
    let s = g.add(f, h).unwrap();
    let ds = g.grad_values(s, &[x]).unwrap()[0].item();
    let df = g.grad_values(f, &[x]).unwrap()[0].item();
    let dh = g.grad_values(h, &[x]).unwrap()[0].item();
    assert_eq!(ds, df + dh);
}

#[test]
fn unrelated_leaf_gets_zero_gradient() {
    let mut g = Graph::new();
    let x = scalar_leaf(&mut g, "x", 2.0);
    let z = g.leaf("z", Tensor::zeros(&[2, 2])).unwrap();
    let y = g.mul(x, x).unwrap();
    let grads = g.grad_values(y, &[x, z]).unwrap();
    assert_eq!(grads[1], Tensor::zeros(&[2, 2]));
}

#[test]
fn grad_values_leaves_graph_untouched() {
    let mut case = op_case("softmax", 5).unwrap();
    let before = case.graph.len();
    let a = case.graph.leaf_id("a").unwrap();
    case.graph.grad_values(case.output, &[a]).unwrap();
    assert_eq!(case.graph.len(), before);
}

#[test]
fn duplicate_leaf_is_rejected() {
    let mut g = Graph::new();
    scalar_leaf(&mut g, "x", 1.0);
    assert!(g.leaf("x", Tensor::scalar(2.0)).is_err());
}

#[test]
fn l2_normalize_gives_unit_rows_and_zero_row_stays_finite() {
    let mut g = Graph::new();
    let a = g
        .leaf("a", Tensor::matrix(2, 3, vec![3.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap())
        .unwrap();
    let y = g.l2_normalize(a).unwrap();
    let v = g.value(y);
    let n0: f64 = v.row(0).iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((n0 - 1.0).abs() < 1e-15);
    assert!(v.all_finite());
}

#[test]
fn log_softmax_survives_large_margins() {
    let mut g = Graph::new();
    let a = g
        .leaf("a", Tensor::matrix(1, 3, vec![1000.0, 0.0, -1000.0]).unwrap())
        .unwrap();
    let y = g.log_softmax(a).unwrap();
    assert!(g.value(y).all_finite());
    assert!(g.value(y).data()[0].abs() < 1e-300);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// Every op kind, several seeds each: more than 100 random graphs per run.
    #[test]
    fn every_op_matches_finite_differences(seed in 0u64..1_000_000) {
        for op in DIFFERENTIABLE_OPS {
            let mut case = op_case(op, seed).unwrap();
            let r = finite_difference_check(&mut case.graph, case.output, &case.leaves, 1e-5).unwrap();
            prop_assert!(r.max_rel_error < 1e-6, "{op}: {r:?}");
        }
    }

    /// Differentiating the gradient graph again agrees with finite differences
    /// of the first gradient.
    #[test]
    fn gradient_graphs_are_differentiable(seed in 0u64..1_000_000) {
        for op in DIFFERENTIABLE_OPS.iter().filter(|o| **o != "relu") {
            let mut case = op_case(op, seed).unwrap();
            let leaf = case.graph.leaf_id(case.leaves[0]).unwrap();
            let d = case.graph.grad_nodes(case.output, &[leaf]).unwrap()[0];
            let shape = case.graph.shape(d).to_vec();
            let n: usize = shape.iter().product();
            let weights = (0..n).map(|i| 0.3 + 0.17 * i as f64).collect();
            let w = case.graph.constant(Tensor::from_parts(shape, weights));
            let prod = case.graph.mul(d, w).unwrap();
            let gsum = case.graph.sum(prod).unwrap();
            let r = finite_difference_check(&mut case.graph, gsum, &case.leaves, 1e-5).unwrap();
            prop_assert!(r.max_rel_error < 1e-5, "{op}: {r:?}");
        }
    }
}
