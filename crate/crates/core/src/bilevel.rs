//! Inner-loop adaptation and the two outer updates.
//!
//! Weights are plain tensor lists so the same engine drives the network
//! ([`EpisodeObjective`]) and the scalar quadratic used as a closed-form
//! oracle ([`QuadraticObjective`]). Every episode gets its own graph; episode
//! contributions are summed in slice order and then averaged.

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::model::{log_predictive, loss_total, Batch, LossWeights, ParamNodes};
use crate::tensor::Tensor;

/// Losses that define one task.
pub trait Objective {
    /// Loss minimized by the inner loop (support set).
    fn inner_loss(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId>;
    /// Loss evaluated at the adapted weights (query set).
    fn outer_loss(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId>;
    /// Row-wise log class probabilities on the query set.
    fn query_log_probs(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId>;
}

/// Support and query views of one episode under the combined loss.
#[derive(Clone, Debug)]
pub struct EpisodeObjective {
    pub support: Batch,
    pub query: Batch,
    pub weights: LossWeights,
}

impl EpisodeObjective {
    fn nodes(w: &[NodeId]) -> ParamNodes {
        ParamNodes { ids: w.to_vec() }
    }
}

impl Objective for EpisodeObjective {
    fn inner_loss(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
        loss_total(g, &Self::nodes(w), &self.support, self.weights)
    }

    fn outer_loss(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
        loss_total(g, &Self::nodes(w), &self.query, self.weights)
    }

    fn query_log_probs(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
        log_predictive(g, &Self::nodes(w), &self.query.inputs)
    }
}

/// `l(w) = (w - c)^2 / 2` on a single scalar weight, with query logits `[w, 0]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadraticObjective {
    pub support_center: f64,
    pub query_center: f64,
}

impl QuadraticObjective {
    pub fn new(c: f64) -> Self {
        Self {
            support_center: c,
            query_center: c,
        }
    }

    fn half_square(g: &mut Graph, w: NodeId, c: f64) -> Result<NodeId> {
        let c = g.scalar(c);
        let d = g.sub(w, c)?;
        let sq = g.mul(d, d)?;
        g.scale(sq, 0.5)
    }
}

impl Objective for QuadraticObjective {
    fn inner_loss(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
        Self::half_square(g, w[0], self.support_center)
    }

    fn outer_loss(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
        Self::half_square(g, w[0], self.query_center)
    }

    fn query_log_probs(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
        let basis = g.constant(Tensor::from_parts(vec![1, 2], vec![1.0, 0.0]));
        let logits = g.mul(w[0], basis)?;
        g.log_softmax(logits)
    }
}

/// Weights after every inner step, `w^0 ..= w^L`, as graph nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerTrajectory {
    pub steps: Vec<Vec<NodeId>>,
    /// Inner loss at `w^0 .. w^{L-1}`.
    pub support_losses: Vec<f64>,
}

impl InnerTrajectory {
    pub fn last(&self) -> &[NodeId] {
        self.steps.last().expect("trajectory holds w^0")
    }

    pub fn values(&self, g: &Graph, step: usize) -> Vec<Tensor> {
        self.steps[step].iter().map(|&id| g.value(id).clone()).collect()
    }
}

fn check_rate(name: &str, v: f64) -> Result<()> {
    if !(v >= 0.0 && v.is_finite()) {
        return Err(Error::validation(format!("{name} must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn finite_scalar(g: &Graph, id: NodeId, what: &str) -> Result<f64> {
    let v = g.value(id).item();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("{what} is {v}")));
    }
    Ok(v)
}

fn finite_tensors(ts: &[Tensor], what: &str) -> Result<()> {
    if ts.iter().all(Tensor::all_finite) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} has non-finite entries")))
    }
}

/// `w - c * grad`, with the same rounding as `sub(w, scale(grad, c))`.
pub fn sgd_step(w: &[Tensor], grad: &[Tensor], c: f64) -> Vec<Tensor> {
    w.iter()
        .zip(grad)
        .map(|(a, b)| a.zip_map(b, |x, y| x - y * c))
        .collect()
}

/// `steps` plain SGD steps on the inner loss starting from the nodes `w0`.
///
/// When `differentiable` is set every step is recorded, so later gradients
/// flow back into `w0`. Otherwise each step's loss graph is discarded and the
/// new weights enter as constants. Both paths produce bitwise-equal values.
pub fn inner_adapt<O: Objective + ?Sized>(
    obj: &O,
    g: &mut Graph,
    w0: &[NodeId],
    steps: usize,
    alpha: f64,
    differentiable: bool,
) -> Result<InnerTrajectory> {
    check_rate("alpha", alpha)?;
    let mut traj = InnerTrajectory {
        steps: vec![w0.to_vec()],
        support_losses: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let w = traj.last().to_vec();
        if differentiable {
            let loss = obj.inner_loss(g, &w)?;
            traj.support_losses.push(finite_scalar(g, loss, "inner loss")?);
            let grads = g.grad_nodes(loss, &w)?;
            let mut next = Vec::with_capacity(w.len());
            for (&wi, &gi) in w.iter().zip(&grads) {
                let s = g.scale(gi, alpha)?;
                next.push(g.sub(wi, s)?);
            }
            traj.steps.push(next);
        } else {
            let mark = g.len();
            let loss = obj.inner_loss(g, &w)?;
            traj.support_losses.push(finite_scalar(g, loss, "inner loss")?);
            let grads = g.grad_values(loss, &w)?;
            finite_tensors(&grads, "inner gradient")?;
            let current: Vec<Tensor> = w.iter().map(|&id| g.value(id).clone()).collect();
            let next = sgd_step(&current, &grads, alpha);
            g.truncate(mark);
            traj.steps.push(next.into_iter().map(|t| g.constant(t)).collect());
        }
    }
    Ok(traj)
}

/// Non-differentiable adaptation from plain tensors; returns `w^steps` and
/// the inner losses along the way.
pub fn adapt_values<O: Objective + ?Sized>(
    obj: &O,
    theta: &[Tensor],
    steps: usize,
    alpha: f64,
) -> Result<(Vec<Tensor>, Vec<f64>)> {
    let mut g = Graph::new();
    let w0: Vec<NodeId> = theta.iter().map(|t| g.constant(t.clone())).collect();
    let traj = inner_adapt(obj, &mut g, &w0, steps, alpha, false)?;
    Ok((traj.values(&g, steps), traj.support_losses))
}

fn register_theta(g: &mut Graph, theta: &[Tensor]) -> Result<Vec<NodeId>> {
    theta
        .iter()
        .enumerate()
        .map(|(i, t)| g.leaf(format!("theta.{i}"), t.clone()))
        .collect()
}

/// Outer loss at the adapted weights, averaged over objectives.
pub fn mean_outer_loss<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    alpha: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for obj in objs {
        let (w, _) = adapt_values(obj, theta, steps, alpha)?;
        let mut g = Graph::new();
        let ids: Vec<NodeId> = w.into_iter().map(|t| g.constant(t)).collect();
        let loss = obj.outer_loss(&mut g, &ids)?;
        total += finite_scalar(&g, loss, "outer loss")?;
    }
    Ok(total / objs.len() as f64)
}

fn require_episodes<O>(objs: &[O]) -> Result<()> {
    if objs.is_empty() {
        return Err(Error::validation("at least one episode is required"));
    }
    Ok(())
}

fn accumulate(sum: &mut Option<Vec<Tensor>>, grads: Vec<Tensor>) {
    match sum {
        None => *sum = Some(grads),
        Some(acc) => {
            for (a, g) in acc.iter_mut().zip(&grads) {
                *a = a.zip_map(g, |x, y| x + y);
            }
        }
    }
}

fn average(sum: Option<Vec<Tensor>>, k: usize) -> Vec<Tensor> {
    let inv = 1.0 / k as f64;
    sum.expect("non-empty")
        .into_iter()
        .map(|t| t.map(|v| v * inv))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MetaGradientMode {
    /// Differentiate through every inner step.
    #[default]
    Exact,
    /// Treat `w^L` as independent of `theta` and use the outer gradient at `w^L`.
    FirstOrder,
}

/// Gradient with respect to `theta` of the mean outer loss at `w^L(theta)`,
/// plus the mean outer loss and mean inner loss.
pub fn meta_gradient_standard<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    alpha: f64,
    mode: MetaGradientMode,
) -> Result<(Vec<Tensor>, f64, f64)> {
    require_episodes(objs)?;
    let mut sum = None;
    let mut outer = 0.0;
    let mut inner = 0.0;
    for obj in objs {
        let mut g = Graph::new();
        let (grads, loss, traj) = match mode {
            MetaGradientMode::Exact => {
                let th = register_theta(&mut g, theta)?;
                let traj = inner_adapt(obj, &mut g, &th, steps, alpha, true)?;
                let w = traj.last().to_vec();
                let loss = obj.outer_loss(&mut g, &w)?;
                let grads = g.grad_values(loss, &th)?;
                (grads, loss, traj)
            }
            MetaGradientMode::FirstOrder => {
                let (w, losses) = adapt_values(obj, theta, steps, alpha)?;
                let wl = register_theta(&mut g, &w)?;
                let loss = obj.outer_loss(&mut g, &wl)?;
                let grads = g.grad_values(loss, &wl)?;
                let traj = InnerTrajectory {
                    steps: vec![wl],
                    support_losses: losses,
                };
                (grads, loss, traj)
            }
        };
        outer += finite_scalar(&g, loss, "outer loss")?;
        inner += mean_or_zero(&traj.support_losses);
        finite_tensors(&grads, "meta-gradient")?;
        accumulate(&mut sum, grads);
    }
    let k = objs.len() as f64;
    Ok((average(sum, objs.len()), outer / k, inner / k))
}

fn mean_or_zero(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Continues `delta` further inner steps from `w` without recording gradients.
/// `delta == 0` returns `w` unchanged.
pub(crate) fn extend_steps<O: Objective + ?Sized>(
    obj: &O,
    w: &[Tensor],
    delta: usize,
    alpha: f64,
) -> Result<Vec<Tensor>> {
    Ok(adapt_values(obj, w, delta, alpha)?.0)
}

/// `w^{L+delta}`: the inner loop run `delta` steps past `L`, detached.
pub fn bootstrap_target<O: Objective + ?Sized>(
    obj: &O,
    theta: &[Tensor],
    steps: usize,
    delta: usize,
    alpha: f64,
) -> Result<Vec<Tensor>> {
    if delta == 0 {
        return Err(Error::validation("bootstrap delta must be at least 1"));
    }
    let (wl, _) = adapt_values(obj, theta, steps, alpha)?;
    extend_steps(obj, &wl, delta, alpha)
}

/// Mean over query rows of `KL(pi_target || pi_student)`. The target enters
/// as a constant.
pub fn kl_matching_loss<O: Objective + ?Sized>(
    obj: &O,
    g: &mut Graph,
    target: &[Tensor],
    student: &[NodeId],
) -> Result<NodeId> {
    let mark = g.len();
    let consts: Vec<NodeId> = target.iter().map(|t| g.constant(t.clone())).collect();
    let lt = obj.query_log_probs(g, &consts)?;
    let log_t = g.value(lt).clone();
    g.truncate(mark);
    let rows = log_t.shape()[0];
    let p_t = log_t.map(f64::exp);
    let log_s = obj.query_log_probs(g, student)?;
    let log_t = g.constant(log_t);
    let p_t = g.constant(p_t);
    let diff = g.sub(log_t, log_s)?;
    let terms = g.mul(p_t, diff)?;
    let total = g.sum(terms)?;
    g.scale(total, 1.0 / rows as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaUpdateReport {
    /// Mean KL for the bootstrapped update, mean query loss for the standard one.
    pub outer_loss: f64,
    pub kl_value: Option<f64>,
    pub mean_inner_loss: f64,
    pub grad_norm: f64,
    pub theta_before: Vec<Tensor>,
    pub theta_after: Vec<Tensor>,
}

fn norm(ts: &[Tensor]) -> f64 {
    ts.iter()
        .flat_map(|t| t.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Gradient of the mean KL matching loss with respect to `theta`, plus the
/// mean KL and mean inner loss. `delta == 0` is accepted here for stationarity
/// tests.
pub(crate) fn bootstrapped_gradient<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    delta: usize,
    alpha: f64,
) -> Result<(Vec<Tensor>, f64, f64)> {
    require_episodes(objs)?;
    check_rate("alpha", alpha)?;
    let mut sum = None;
    let mut kl_total = 0.0;
    let mut inner = 0.0;
    for obj in objs {
        let mut g = Graph::new();
        let th = register_theta(&mut g, theta)?;
        let traj = inner_adapt(obj, &mut g, &th, steps, alpha, true)?;
        let student = traj.last().to_vec();
        let wl = traj.values(&g, steps);
        let target = extend_steps(obj, &wl, delta, alpha)?;
        let kl = kl_matching_loss(obj, &mut g, &target, &student)?;
        kl_total += finite_scalar(&g, kl, "KL")?;
        inner += mean_or_zero(&traj.support_losses);
        let grads = g.grad_values(kl, &th)?;
        finite_tensors(&grads, "meta-gradient")?;
        accumulate(&mut sum, grads);
    }
    let k = objs.len() as f64;
    Ok((average(sum, objs.len()), kl_total / k, inner / k))
}

/// One outer step on the bootstrapped KL objective.
pub fn meta_step_bootstrapped<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    delta: usize,
    alpha: f64,
    beta: f64,
) -> Result<MetaUpdateReport> {
    if delta == 0 {
        return Err(Error::validation("bootstrap delta must be at least 1"));
    }
    check_rate("beta", beta)?;
    let (grad, kl, inner) = bootstrapped_gradient(objs, theta, steps, delta, alpha)?;
    Ok(MetaUpdateReport {
        outer_loss: kl,
        kl_value: Some(kl),
        mean_inner_loss: inner,
        grad_norm: norm(&grad),
        theta_before: theta.to_vec(),
        theta_after: sgd_step(theta, &grad, beta),
    })
}

/// One outer step on the query loss at the adapted weights.
pub fn meta_step_standard<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    alpha: f64,
    beta: f64,
    mode: MetaGradientMode,
) -> Result<MetaUpdateReport> {
    check_rate("beta", beta)?;
    let (grad, outer, inner) = meta_gradient_standard(objs, theta, steps, alpha, mode)?;
    Ok(MetaUpdateReport {
        outer_loss: outer,
        kl_value: None,
        mean_inner_loss: inner,
        grad_norm: norm(&grad),
        theta_before: theta.to_vec(),
        theta_after: sgd_step(theta, &grad, beta),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeRow {
    pub beta: f64,
    /// `f(w^L(theta_new)) - f(w^L(theta))`.
    pub change: f64,
    pub kl: f64,
    /// `-(beta / alpha) * kl`.
    pub predicted: f64,
}

/// For each `beta`, takes one bootstrapped step and measures the change in
/// mean outer loss at the `L`-step adapted weights.
pub fn bootstrap_descent_probe<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    delta: usize,
    alpha: f64,
    betas: &[f64],
) -> Result<Vec<ProbeRow>> {
    if betas.iter().any(|&b| !(b > 0.0 && b.is_finite())) {
        return Err(Error::validation("probe step sizes must be positive"));
    }
    probe_with_delta(objs, theta, steps, delta, alpha, betas)
}

pub(crate) fn probe_with_delta<O: Objective>(
    objs: &[O],
    theta: &[Tensor],
    steps: usize,
    delta: usize,
    alpha: f64,
    betas: &[f64],
) -> Result<Vec<ProbeRow>> {
    if alpha == 0.0 {
        return Err(Error::validation("probe needs alpha > 0"));
    }
    let (grad, kl, _) = bootstrapped_gradient(objs, theta, steps, delta, alpha)?;
    let base = mean_outer_loss(objs, theta, steps, alpha)?;
    betas
        .iter()
        .map(|&beta| {
            let moved = sgd_step(theta, &grad, beta);
            let after = mean_outer_loss(objs, &moved, steps, alpha)?;
            Ok(ProbeRow {
                beta,
                change: after - base,
                kl,
                predicted: -(beta / alpha) * kl,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::gradcheck::loss_fixture;

    fn scalar(v: f64) -> Vec<Tensor> {
        vec![Tensor::scalar(v)]
    }

    fn episode(seed: u64) -> (EpisodeObjective, Vec<Tensor>) {
        let f = loss_fixture(seed);
        (
            EpisodeObjective {
                support: f.support,
                query: f.query,
                weights: LossWeights::default(),
            },
            f.params.tensors().to_vec(),
        )
    }

    #[test]
    fn zero_steps_return_theta() {
        let (obj, theta) = episode(1);
        let (w, losses) = adapt_values(&obj, &theta, 0, 0.1).unwrap();
        assert!(losses.is_empty());
        assert!(w.iter().zip(&theta).all(|(a, b)| a.bitwise_eq(b)));
    }

    #[test]
    fn quadratic_inner_loop_closed_form() {
        let (alpha, theta, c) = (0.3, 2.5, -0.7);
        let q = QuadraticObjective::new(c);
        let (w1, _) = adapt_values(&q, &scalar(theta), 1, alpha).unwrap();
        assert!((w1[0].item() - (theta - alpha * (theta - c))).abs() < 1e-12);
        for l in 0..8 {
            let (w, _) = adapt_values(&q, &scalar(theta), l, alpha).unwrap();
            let expected = c + (1.0 - alpha).powi(l as i32) * (theta - c);
            assert!((w[0].item() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_meta_gradient_closed_form() {
        let (alpha, theta, c) = (0.2, 1.3, 0.4);
        let q = [QuadraticObjective::new(c)];
        for l in 0..6 {
            let (g, _, _) = meta_gradient_standard(&q, &scalar(theta), l, alpha, MetaGradientMode::Exact).unwrap();
            let expected = (1.0 - alpha).powi(2 * l as i32) * (theta - c);
            assert!((g[0].item() - expected).abs() < 1e-10, "L={l}");
        }
    }

    #[test]
    fn quadratic_step_and_target_closed_forms() {
        let (alpha, beta, theta, c) = (0.1, 0.05, -0.8, 0.6);
        let q = QuadraticObjective::new(c);
        let (l, delta) = (3, 4);
        let r = meta_step_standard(&[q], &scalar(theta), l, alpha, beta, MetaGradientMode::Exact).unwrap();
        let expected = theta - beta * (1.0 - alpha).powi(2 * l as i32) * (theta - c);
        assert!((r.theta_after[0].item() - expected).abs() < 1e-10);
        let t = bootstrap_target(&q, &scalar(theta), l, delta, alpha).unwrap();
        let expected = c + (1.0 - alpha).powi((l + delta) as i32) * (theta - c);
        assert!((t[0].item() - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_alpha_meta_gradient_is_plain_gradient() {
        let (obj, theta) = episode(2);
        let (mg, _, _) = meta_gradient_standard(&[obj.clone()], &theta, 3, 0.0, MetaGradientMode::Exact).unwrap();
        let mut g = Graph::new();
        let th = register_theta(&mut g, &theta).unwrap();
        let loss = obj.outer_loss(&mut g, &th).unwrap();
        let plain = g.grad_values(loss, &th).unwrap();
        for (a, b) in mg.iter().zip(&plain) {
            assert!(a.max_abs_diff(b) < 1e-14);
        }
    }

    #[test]
    fn differentiable_and_plain_paths_agree_bitwise() {
        let (obj, theta) = episode(3);
        let mut g = Graph::new();
        let th = register_theta(&mut g, &theta).unwrap();
        let traj = inner_adapt(&obj, &mut g, &th, 4, 0.1, true).unwrap();
        let (plain, losses) = adapt_values(&obj, &theta, 4, 0.1).unwrap();
        for (a, b) in traj.values(&g, 4).iter().zip(&plain) {
            assert!(a.bitwise_eq(b));
        }
        assert_eq!(traj.support_losses, losses);
        // Each recorded step replays as w - alpha * grad.
        for s in 0..4 {
            let w = traj.values(&g, s);
            let (next, _) = adapt_values(&obj, &w, 1, 0.1).unwrap();
            for (a, b) in next.iter().zip(traj.values(&g, s + 1)) {
                assert!(a.max_abs_diff(&b) < 1e-12);
            }
        }
    }

    #[test]
    fn target_is_suffix_of_longer_adaptation() {
        let (obj, theta) = episode(4);
        let t = bootstrap_target(&obj, &theta, 2, 3, 0.1).unwrap();
        let (w5, _) = adapt_values(&obj, &theta, 5, 0.1).unwrap();
        assert!(t.iter().zip(&w5).all(|(a, b)| a.bitwise_eq(b)));
        assert!(bootstrap_target(&obj, &theta, 2, 0, 0.1).is_err());
    }

    #[test]
    fn longer_target_lowers_support_loss_for_small_alpha() {
        for seed in 0..20 {
            let (obj, theta) = episode(100 + seed);
            let alpha = 1e-3;
            let (wl, _) = adapt_values(&obj, &theta, 5, alpha).unwrap();
            let t = bootstrap_target(&obj, &theta, 5, 5, alpha).unwrap();
            let support = |w: &[Tensor]| {
                let mut g = Graph::new();
                let ids: Vec<_> = w.iter().map(|x| g.constant(x.clone())).collect();
                let l = obj.inner_loss(&mut g, &ids).unwrap();
                g.value(l).item()
            };
            assert!(support(&t) <= support(&wl), "seed {seed}");
        }
    }

    #[test]
    fn kl_hand_value_and_self_match() {
        // Two query rows, target [0.9, 0.1] and student [0.5, 0.5] on each.
        struct Fixed;
        impl Objective for Fixed {
            fn inner_loss(&self, _: &mut Graph, _: &[NodeId]) -> Result<NodeId> {
                unreachable!()
            }
            fn outer_loss(&self, _: &mut Graph, _: &[NodeId]) -> Result<NodeId> {
                unreachable!()
            }
            fn query_log_probs(&self, g: &mut Graph, w: &[NodeId]) -> Result<NodeId> {
                let e = g.expand_rows(w[0], 2)?;
                g.log_softmax(e)
            }
        }
        let logit = (9.0f64).ln();
        let mut g = Graph::new();
        let s = g.leaf("s", Tensor::vector(vec![0.0, 0.0])).unwrap();
        let kl = kl_matching_loss(&Fixed, &mut g, &[Tensor::vector(vec![logit, 0.0])], &[s]).unwrap();
        let expected = 0.9 * 1.8f64.ln() + 0.1 * 0.2f64.ln();
        assert!((g.value(kl).item() - expected).abs() < 1e-12);
        assert!((expected - 0.368074).abs() < 2e-5);

        let (obj, theta) = episode(5);
        let mut g = Graph::new();
        let ids = register_theta(&mut g, &theta).unwrap();
        let kl = kl_matching_loss(&obj, &mut g, &theta, &ids).unwrap();
        assert!(g.value(kl).item().abs() < 1e-12);
    }

    #[test]
    fn zero_delta_target_gives_stationary_step() {
        let (obj, theta) = episode(6);
        let (grad, kl, _) = bootstrapped_gradient(&[obj], &theta, 2, 0, 0.1).unwrap();
        assert!(kl.abs() < 1e-12);
        assert!(grad.iter().all(|t| t.data().iter().all(|v| v.abs() < 1e-12)));
    }

    #[test]
    fn zero_beta_leaves_theta_bitwise() {
        let (obj, theta) = episode(7);
        let r = meta_step_bootstrapped(&[obj.clone()], &theta, 2, 2, 0.1, 0.0).unwrap();
        assert!(r.theta_after.iter().zip(&theta).all(|(a, b)| a.bitwise_eq(b)));
        let r = meta_step_standard(&[obj], &theta, 2, 0.1, 0.0, MetaGradientMode::Exact).unwrap();
        assert!(r.theta_after.iter().zip(&theta).all(|(a, b)| a.bitwise_eq(b)));
    }

    #[test]
    fn first_order_matches_exact_without_inner_steps() {
        let (obj, theta) = episode(8);
        let objs = [obj];
        let (a, _, _) = meta_gradient_standard(&objs, &theta, 0, 0.1, MetaGradientMode::Exact).unwrap();
        let (b, _, _) = meta_gradient_standard(&objs, &theta, 0, 0.1, MetaGradientMode::FirstOrder).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.bitwise_eq(y)));
    }

    #[test]
    fn kl_is_nonnegative_on_random_pairs() {
        for seed in 0..10 {
            let (obj, theta) = episode(200 + seed);
            let target = crate::model::ParamSet::init(crate::gradcheck::TINY_DIMS, seed).tensors().to_vec();
            let mut g = Graph::new();
            let ids = register_theta(&mut g, &theta).unwrap();
            let kl = kl_matching_loss(&obj, &mut g, &target, &ids).unwrap();
            assert!(g.value(kl).item() >= 0.0);
        }
    }

    #[test]
    fn standard_step_descends_for_small_beta() {
        for seed in 0..20 {
            let (obj, theta) = episode(400 + seed);
            let objs = [obj];
            let before = mean_outer_loss(&objs, &theta, 2, 0.1).unwrap();
            let r = meta_step_standard(&objs, &theta, 2, 0.1, 1e-3, MetaGradientMode::Exact).unwrap();
            let after = mean_outer_loss(&objs, &r.theta_after, 2, 0.1).unwrap();
            assert!(after <= before, "seed {seed}: {before} -> {after}");
        }
    }

    #[test]
    fn probe_is_flat_when_target_matches_student() {
        let (obj, theta) = episode(9);
        let rows = probe_with_delta(&[obj], &theta, 2, 0, 0.1, &[1e-2, 1e-3]).unwrap();
        for r in rows {
            assert!(r.change.abs() < 1e-10);
            assert!(r.kl.abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_rates_rejected() {
        let q = [QuadraticObjective::new(0.0)];
        assert!(meta_step_standard(&q, &scalar(1.0), 1, -0.1, 0.1, MetaGradientMode::Exact).is_err());
        assert!(meta_step_bootstrapped(&q, &scalar(1.0), 1, 1, 0.1, f64::NAN).is_err());
        assert!(bootstrap_descent_probe(&q, &scalar(1.0), 1, 1, 0.1, &[0.0]).is_err());
        assert!(meta_gradient_standard::<QuadraticObjective>(&[], &scalar(1.0), 1, 0.1, MetaGradientMode::Exact).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(4))]

        #[test]
        fn meta_gradients_match_finite_differences(seed: u64) {
            let (obj, theta) = episode(seed);
            for bootstrapped in [false, true] {
                let mut g = Graph::new();
                let th = register_theta(&mut g, &theta).unwrap();
                let traj = inner_adapt(&obj, &mut g, &th, 2, 0.1, true).unwrap();
                let student = traj.last().to_vec();
                let out = if bootstrapped {
                    let target = extend_steps(&obj, &traj.values(&g, 2), 2, 0.1).unwrap();
                    kl_matching_loss(&obj, &mut g, &target, &student).unwrap()
                } else {
                    obj.outer_loss(&mut g, &student).unwrap()
                };
                let names: Vec<String> = (0..theta.len()).map(|i| format!("theta.{i}")).collect();
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                let r = finite_difference_check(&mut g, out, &names, 1e-5).unwrap();
                prop_assert!(r.max_rel_error < 1e-5, "bootstrapped={}: {:?}", bootstrapped, r);
            }
        }
    }
}
