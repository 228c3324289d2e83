//! Task network and inner-loop losses.
//!
//! Two tanh layers form the feature extractor. A linear projection head with
//! row-wise L2 normalization feeds the contrastive loss, and a linear
//! classifier head feeds cross-entropy.

use rand::Rng;

use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;
use crate::taskgen::View;
use crate::tensor::Tensor;

pub const PARAM_NAMES: [&str; 8] = [
    "extractor.0.weight",
    "extractor.0.bias",
    "extractor.1.weight",
    "extractor.1.bias",
    "projection.weight",
    "projection.bias",
    "classifier.weight",
    "classifier.bias",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub projection: usize,
    pub classes: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            input: 256,
            hidden: 64,
            projection: 16,
            classes: 4,
        }
    }
}

impl ModelDims {
    pub fn shapes(&self) -> [Vec<usize>; 8] {
        let Self {
            input: i,
            hidden: h,
            projection: p,
            classes: n,
        } = *self;
        [
            vec![i, h],
            vec![h],
            vec![h, h],
            vec![h],
            vec![h, p],
            vec![p],
            vec![h, n],
            vec![n],
        ]
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.shapes().iter().map(|s| s.iter().product::<usize>()).sum()
    }
}

/// Named parameter tensors in the fixed order of [`PARAM_NAMES`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet {
    dims: ModelDims,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn zeros(dims: ModelDims) -> Self {
        let tensors = dims.shapes().iter().map(|s| Tensor::zeros(s)).collect();
        Self { dims, tensors }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut rng = rng::seeded(seed);
        let tensors = dims
            .shapes()
            .iter()
            .map(|s| {
                if s.len() == 2 {
                    let limit = (6.0 / (s[0] + s[1]) as f64).sqrt();
                    let data = (0..s[0] * s[1])
                        .map(|_| rng.random_range(-limit..limit))
                        .collect();
                    Tensor::from_parts(s.clone(), data)
                } else {
                    Tensor::zeros(s)
                }
            })
            .collect();
        Self { dims, tensors }
    }

    /// Builds a set from named tensors, checking names, order and shapes.
    pub fn from_named(dims: ModelDims, named: Vec<(String, Tensor)>) -> Result<Self> {
        if named.len() != PARAM_NAMES.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter tensors, got {}",
                PARAM_NAMES.len(),
                named.len()
            )));
        }
        let shapes = dims.shapes();
        let mut tensors = Vec::with_capacity(named.len());
        for ((name, t), (want_name, want_shape)) in named.into_iter().zip(PARAM_NAMES.iter().zip(&shapes)) {
            if name != *want_name || t.shape() != want_shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter '{name}' {:?} does not match '{want_name}' {want_shape:?}",
                    t.shape()
                )));
            }
            tensors.push(t);
        }
        Ok(Self { dims, tensors })
    }

    /// Infers dimensions from tensor shapes.
    pub fn from_named_infer(named: Vec<(String, Tensor)>) -> Result<Self> {
        let dims = match named.first().map(|(_, t)| t.shape()) {
            Some([i, h]) => {
                let p = named.get(4).and_then(|(_, t)| t.shape().get(1).copied());
                let n = named.get(6).and_then(|(_, t)| t.shape().get(1).copied());
                match (p, n) {
                    (Some(p), Some(n)) => ModelDims {
                        input: *i,
                        hidden: *h,
                        projection: p,
                        classes: n,
                    },
                    _ => return Err(Error::Shape("incomplete parameter list".into())),
                }
            }
            _ => return Err(Error::Shape("first parameter must be a matrix".into())),
        };
        Self::from_named(dims, named)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Tensor)> {
        PARAM_NAMES.iter().copied().zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn dim(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn unflatten(dims: ModelDims, flat: &[f64]) -> Result<Self> {
        if flat.len() != dims.param_count() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, model needs {}",
                flat.len(),
                dims.param_count()
            )));
        }
        let mut at = 0;
        let tensors = dims
            .shapes()
            .iter()
            .map(|s| {
                let n: usize = s.iter().product();
                let t = Tensor::from_parts(s.clone(), flat[at..at + n].to_vec());
                at += n;
                t
            })
            .collect();
        Ok(Self { dims, tensors })
    }

    /// `self + c * other`, elementwise.
    pub fn add_scaled(&self, other: &ParamSet, c: f64) -> Self {
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.zip_map(b, |x, y| x + c * y))
            .collect();
        Self {
            dims: self.dims,
            tensors,
        }
    }

    /// `self - c * other`, with the same rounding as the graph's `sub(w, scale(g, c))`.
    pub fn sub_scaled(&self, other: &ParamSet, c: f64) -> Self {
        let tensors = self
            .tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.zip_map(b, |x, y| x - y * c))
            .collect();
        Self {
            dims: self.dims,
            tensors,
        }
    }

    pub fn norm_l2(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.bitwise_eq(b))
    }

    /// Registers every tensor as a graph leaf named `{prefix}{name}`.
    pub fn register(&self, g: &mut Graph, prefix: &str) -> Result<ParamNodes> {
        let ids = self
            .iter()
            .map(|(name, t)| g.leaf(format!("{prefix}{name}"), t.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParamNodes { ids })
    }

    /// Adds every tensor as a constant (no gradient flows into it).
    pub fn constants(&self, g: &mut Graph) -> ParamNodes {
        ParamNodes {
            ids: self.tensors.iter().map(|t| g.constant(t.clone())).collect(),
        }
    }
}

/// Graph nodes holding one parameter set, in [`PARAM_NAMES`] order. Nodes
/// need not be leaves: adapted weights are ordinary interior nodes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamNodes {
    pub ids: Vec<NodeId>,
}

impl ParamNodes {
    pub fn get(&self, name: &str) -> NodeId {
        let i = PARAM_NAMES
            .iter()
            .position(|n| *n == name)
            .expect("known parameter name");
        self.ids[i]
    }

    /// Reads the current values back into a parameter set.
    pub fn values(&self, g: &Graph, dims: ModelDims) -> ParamSet {
        ParamSet {
            dims,
            tensors: self.ids.iter().map(|&id| g.value(id).clone()).collect(),
        }
    }
}

/// A set of views as a `[views, pixels]` input matrix plus labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn from_images(images: &[&Image], labels: Vec<usize>) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::validation("empty batch"))?;
        let cols = first.pixels().len();
        let mut data = Vec::with_capacity(images.len() * cols);
        for img in images {
            if img.pixels().len() != cols {
                return Err(Error::Shape(format!(
                    "view with {} pixels in a batch of {cols}-pixel views",
                    img.pixels().len()
                )));
            }
            data.extend_from_slice(img.pixels());
        }
        if labels.len() != images.len() {
            return Err(Error::validation("one label per view required"));
        }
        Ok(Self {
            inputs: Tensor::from_parts(vec![images.len(), cols], data),
            labels,
        })
    }

    pub fn from_views(views: &[View]) -> Result<Self> {
        let images: Vec<&Image> = views.iter().map(|v| &v.image).collect();
        Self::from_images(&images, views.iter().map(|v| v.label).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Whether every present label has at least two views.
    pub fn has_positive_pairs(&self) -> bool {
        let max = self.labels.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0usize; max + 1];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts.iter().all(|&c| c != 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelOutputs {
    pub features: NodeId,
    pub projections: NodeId,
    pub logits: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau: 0.5,
        }
    }
}

fn dense(g: &mut Graph, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
    let y = g.matmul(x, w)?;
    g.add(y, b)
}

pub fn forward(g: &mut Graph, params: &ParamNodes, inputs: &Tensor) -> Result<ModelOutputs> {
    let x = g.constant(inputs.clone());
    forward_node(g, params, x)
}

pub fn forward_node(g: &mut Graph, params: &ParamNodes, x: NodeId) -> Result<ModelOutputs> {
    let h1 = dense(g, x, params.ids[0], params.ids[1])?;
    let h1 = g.tanh(h1)?;
    let h2 = dense(g, h1, params.ids[2], params.ids[3])?;
    let features = g.tanh(h2)?;
    let p = dense(g, features, params.ids[4], params.ids[5])?;
    let projections = g.l2_normalize(p)?;
    let logits = dense(g, features, params.ids[6], params.ids[7])?;
    Ok(ModelOutputs {
        features,
        projections,
        logits,
    })
}

/// Mean negative log-likelihood of the true labels.
pub fn loss_ce(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let (rows, n) = match g.shape(logits) {
        [r, n] => (*r, *n),
        s => return Err(Error::Shape(format!("logits must be a matrix, got {s:?}"))),
    };
    if rows != labels.len() {
        return Err(Error::Shape(format!("{rows} logit rows for {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
        return Err(Error::validation(format!("label {bad} out of range for {n} classes")));
    }
    let mut pick = vec![0.0; rows * n];
    for (i, &l) in labels.iter().enumerate() {
        pick[i * n + l] = -1.0 / rows as f64;
    }
    let ls = g.log_softmax(logits)?;
    let mask = g.constant(Tensor::from_parts(vec![rows, n], pick));
    let picked = g.mul(ls, mask)?;
    g.sum(picked)
}

/// Multi-positive contrastive loss over unit projections.
pub fn loss_cl(g: &mut Graph, projections: NodeId, labels: &[usize], tau: f64) -> Result<NodeId> {
    if !(tau > 0.0) {
        return Err(Error::validation(format!("temperature must be positive, got {tau}")));
    }
    let v = labels.len();
    if g.shape(projections).first() != Some(&v) {
        return Err(Error::Shape(format!(
            "{:?} projections for {v} labels",
            g.shape(projections)
        )));
    }
    let mut positive = vec![0.0; v * v];
    let mut others = vec![0.0; v * v];
    for i in 0..v {
        let mut has_positive = false;
        for j in 0..v {
            if i != j {
                others[i * v + j] = 1.0;
                if labels[i] == labels[j] {
                    positive[i * v + j] = 1.0;
                    has_positive = true;
                }
            }
        }
        if !has_positive {
            return Err(Error::validation(format!(
                "label {} has a single view, no positive pair",
                labels[i]
            )));
        }
    }
    let pt = g.transpose(projections)?;
    let sim = g.matmul(projections, pt)?;
    let logits = g.scale(sim, 1.0 / tau)?;
    let e = g.exp(logits)?;
    let pos_mask = g.constant(Tensor::from_parts(vec![v, v], positive));
    let all_mask = g.constant(Tensor::from_parts(vec![v, v], others));
    let pos = g.mul(e, pos_mask)?;
    let pos = g.sum_rows(pos)?;
    let all = g.mul(e, all_mask)?;
    let all = g.sum_rows(all)?;
    let log_all = g.log(all)?;
    let log_pos = g.log(pos)?;
    let per_anchor = g.sub(log_all, log_pos)?;
    g.mean(per_anchor)
}

/// Cross-entropy plus `lambda` times the contrastive loss. With `lambda == 0`
/// the contrastive term is not built at all.
pub fn loss_total(
    g: &mut Graph,
    params: &ParamNodes,
    batch: &Batch,
    weights: LossWeights,
) -> Result<NodeId> {
    let out = forward(g, params, &batch.inputs)?;
    let ce = loss_ce(g, out.logits, &batch.labels)?;
    if weights.lambda == 0.0 {
        return Ok(ce);
    }
    let cl = loss_cl(g, out.projections, &batch.labels, weights.tau)?;
    let cl = g.scale(cl, weights.lambda)?;
    g.add(ce, cl)
}

/// Row-wise softmax of the classifier logits.
pub fn predictive_distribution(g: &mut Graph, params: &ParamNodes, inputs: &Tensor) -> Result<NodeId> {
    let out = forward(g, params, inputs)?;
    g.softmax(out.logits)
}

/// Row-wise log-softmax of the classifier logits.
pub fn log_predictive(g: &mut Graph, params: &ParamNodes, inputs: &Tensor) -> Result<NodeId> {
    let out = forward(g, params, inputs)?;
    g.log_softmax(out.logits)
}

/// Classifier predictions without building a persistent graph.
pub fn predict(params: &ParamSet, inputs: &Tensor) -> Result<Vec<usize>> {
    let mut g = Graph::new();
    let nodes = params.constants(&mut g);
    let out = forward(&mut g, &nodes, inputs)?;
    let logits = g.value(out.logits);
    let (rows, _) = logits.dims2().expect("matrix logits");
    Ok((0..rows)
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::gradcheck::loss_fixture;

    fn small_dims() -> ModelDims {
        ModelDims {
            input: 6,
            hidden: 5,
            projection: 3,
            classes: 2,
        }
    }

    fn random_batch(seed: u64, labels: Vec<usize>, cols: usize) -> Batch {
        let mut rng = rng::seeded(seed);
        let data = (0..labels.len() * cols)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        Batch {
            inputs: Tensor::from_parts(vec![labels.len(), cols], data),
            labels,
        }
    }

    fn scalar_ce(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut total = 0.0;
        for (row, &l) in logits.iter().zip(labels) {
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            total += -(row[l].exp() / z).ln();
        }
        total / labels.len() as f64
    }

    fn eval_loss(f: impl FnOnce(&mut Graph) -> NodeId) -> f64 {
        let mut g = Graph::new();
        let n = f(&mut g);
        g.value(n).item()
    }

    #[test]
    fn default_dimension_count() {
        assert_eq!(ModelDims::default().param_count(), 21_908);
    }

    #[test]
    fn flatten_roundtrip_is_bitwise() {
        let p = ParamSet::init(ModelDims::default(), 3);
        let back = ParamSet::unflatten(p.dims(), &p.flatten()).unwrap();
        assert!(p.bitwise_eq(&back));
        assert!(ParamSet::unflatten(p.dims(), &[0.0; 3]).is_err());
    }

    #[test]
    fn zero_weights_give_uniform_predictions() {
        let p = ParamSet::zeros(ModelDims::default());
        let b = random_batch(1, vec![0, 1, 2], 256);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, "").unwrap();
        let pi = predictive_distribution(&mut g, &nodes, &b.inputs).unwrap();
        assert!(g.value(pi).data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn duplicate_views_give_identical_rows_and_unit_projections() {
        let p = ParamSet::init(ModelDims::default(), 5);
        let b = random_batch(2, vec![0], 256);
        let mut doubled = b.inputs.data().to_vec();
        doubled.extend_from_slice(b.inputs.data());
        let inputs = Tensor::from_parts(vec![2, 256], doubled);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, "").unwrap();
        let out = forward(&mut g, &nodes, &inputs).unwrap();
        for id in [out.features, out.projections, out.logits] {
            let t = g.value(id);
            assert!(t.row(0).iter().zip(t.row(1)).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        for i in 0..2 {
            let n: f64 = g.value(out.projections).row(i).iter().map(|v| v * v).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn view_width_mismatch_is_an_error() {
        let p = ParamSet::init(ModelDims::default(), 5);
        let b = random_batch(2, vec![0, 1], 100);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, "").unwrap();
        assert!(forward(&mut g, &nodes, &b.inputs).is_err());
    }

    #[test]
    fn ce_uniform_is_log_n() {
        let v = eval_loss(|g| {
            let l = g.constant(Tensor::zeros(&[3, 4]));
            loss_ce(g, l, &[0, 3, 1]).unwrap()
        });
        assert!((v - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ce_saturates_with_margin() {
        let v = eval_loss(|g| {
            let l = g.constant(Tensor::matrix(2, 2, vec![20.0, 0.0, 0.0, 20.0]).unwrap());
            loss_ce(g, l, &[0, 1]).unwrap()
        });
        assert!(v < 1e-3);
    }

    #[test]
    fn ce_matches_scalar_reimplementation() {
        let mut rng = rng::seeded(17);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..3).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let labels = [2, 0, 1, 1, 2];
        let v = eval_loss(|g| {
            let l = g.constant(Tensor::matrix(5, 3, rows.concat()).unwrap());
            loss_ce(g, l, &labels).unwrap()
        });
        assert!((v - scalar_ce(&rows, &labels)).abs() < 1e-12);
    }

    #[test]
    fn ce_rejects_out_of_range_label() {
        let mut g = Graph::new();
        let l = g.constant(Tensor::zeros(&[2, 2]));
        assert!(loss_ce(&mut g, l, &[0, 2]).is_err());
    }

    #[test]
    fn cl_two_by_two_hand_value() {
        // Views 0,1 from source 0 at +e1; views 2,3 from source 1 at -e1.
        let p = vec![1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0];
        let v = eval_loss(|g| {
            let pn = g.constant(Tensor::matrix(4, 2, p).unwrap());
            loss_cl(g, pn, &[0, 0, 1, 1], 0.5).unwrap()
        });
        let e = std::f64::consts::E;
        let expected = -(e.powi(2) / (e.powi(2) + 2.0 * e.powi(-2))).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((expected - (1.0 + 2.0 * (-4f64).exp()).ln()).abs() < 1e-15);
    }

    #[test]
    fn cl_identical_projections() {
        let labels = [0, 0, 0, 1, 1, 2, 2];
        let v = eval_loss(|g| {
            let pn = g.constant(Tensor::matrix(7, 2, [0.6, 0.8].repeat(7)).unwrap());
            loss_cl(g, pn, &labels, 0.5).unwrap()
        });
        // Anchors in the 3-view class have 2 positives, the rest 1; all see 6 others.
        let expected = (3.0 * -(2.0f64 / 6.0).ln() + 4.0 * -(1.0f64 / 6.0).ln()) / 7.0;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn cl_needs_positive_pairs() {
        let mut g = Graph::new();
        let pn = g.constant(Tensor::matrix(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0]).unwrap());
        assert!(loss_cl(&mut g, pn, &[0, 0, 1], 0.5).is_err());
        assert!(loss_cl(&mut g, pn, &[0, 0, 0], 0.0).is_err());
    }

    #[test]
    fn cl_is_positive_with_negatives() {
        let p = ParamSet::init(small_dims(), 2);
        let b = random_batch(3, vec![0, 0, 1, 1], 6);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, "").unwrap();
        let out = forward(&mut g, &nodes, &b.inputs).unwrap();
        let cl = loss_cl(&mut g, out.projections, &b.labels, 0.5).unwrap();
        assert!(g.value(cl).item() > 0.0);
    }

    #[test]
    fn total_loss_composition() {
        let p = ParamSet::init(small_dims(), 4);
        let b = random_batch(5, vec![0, 1, 0, 1], 6);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, "").unwrap();
        let t0 = loss_total(&mut g, &nodes, &b, LossWeights { lambda: 0.0, tau: 0.5 }).unwrap();
        let t1 = loss_total(&mut g, &nodes, &b, LossWeights { lambda: 1.0, tau: 0.5 }).unwrap();
        let out = forward(&mut g, &nodes, &b.inputs).unwrap();
        let ce = loss_ce(&mut g, out.logits, &b.labels).unwrap();
        let cl = loss_cl(&mut g, out.projections, &b.labels, 0.5).unwrap();
        assert_eq!(g.value(t0).item().to_bits(), g.value(ce).item().to_bits());
        let sum = g.value(ce).item() + g.value(cl).item();
        assert!((g.value(t1).item() - sum).abs() < 1e-12);
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        let f = loss_fixture(6);
        let mut g = Graph::new();
        let nodes = f.params.register(&mut g, "").unwrap();
        let loss = loss_total(&mut g, &nodes, &f.support, LossWeights::default()).unwrap();
        let r = finite_difference_check(&mut g, loss, &PARAM_NAMES, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn relabeling_with_permuted_classifier_is_invariant() {
        let dims = ModelDims {
            classes: 3,
            ..small_dims()
        };
        let p = ParamSet::init(dims, 8);
        let b = random_batch(9, vec![0, 1, 2, 0, 1, 2], 6);
        let perm = [2, 0, 1];
        let mut q = p.clone();
        let (h, n) = (dims.hidden, dims.classes);
        let wc = p.get("classifier.weight").unwrap().data().to_vec();
        let bc = p.get("classifier.bias").unwrap().data().to_vec();
        let mut wq = vec![0.0; h * n];
        let mut bq = vec![0.0; n];
        for c in 0..n {
            bq[perm[c]] = bc[c];
            for r in 0..h {
                wq[r * n + perm[c]] = wc[r * n + c];
            }
        }
        q.tensors_mut()[6] = Tensor::from_parts(vec![h, n], wq);
        q.tensors_mut()[7] = Tensor::from_parts(vec![n], bq);
        let bp = Batch {
            inputs: b.inputs.clone(),
            labels: b.labels.iter().map(|&l| perm[l]).collect(),
        };
        let loss = |params: &ParamSet, batch: &Batch| {
            let mut g = Graph::new();
            let nodes = params.register(&mut g, "").unwrap();
            let l = loss_total(&mut g, &nodes, batch, LossWeights::default()).unwrap();
            g.value(l).item()
        };
        assert!((loss(&p, &b) - loss(&q, &bp)).abs() < 1e-12);
    }

    #[test]
    fn predictive_rows_sum_to_one_and_shift_invariant() {
        let p = ParamSet::init(ModelDims::default(), 10);
        let b = random_batch(11, vec![0, 1, 2, 3, 0], 256);
        let mut g = Graph::new();
        let nodes = p.register(&mut g, "").unwrap();
        let pi = predictive_distribution(&mut g, &nodes, &b.inputs).unwrap();
        let pv = g.value(pi).clone();
        for i in 0..5 {
            assert!((pv.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        // Shifting the classifier bias by a constant shifts every logit row.
        let mut shifted = p.clone();
        shifted.tensors_mut()[7] = shifted.tensors()[7].map(|v| v + 3.7);
        let mut g2 = Graph::new();
        let n2 = shifted.register(&mut g2, "").unwrap();
        let pi2 = predictive_distribution(&mut g2, &n2, &b.inputs).unwrap();
        assert!(g2.value(pi2).max_abs_diff(&pv) < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn cl_is_permutation_invariant(seed: u64) {
            let p = ParamSet::init(small_dims(), seed);
            let b = random_batch(seed ^ 1, vec![0, 1, 2, 0, 1, 2], 6);
            let order = [4, 2, 0, 5, 1, 3];
            let rows: Vec<f64> = order.iter().flat_map(|&i| b.inputs.row(i).to_vec()).collect();
            let shuffled = Batch {
                inputs: Tensor::from_parts(vec![6, 6], rows),
                labels: order.iter().map(|&i| b.labels[i]).collect(),
            };
            let cl = |batch: &Batch| {
                let mut g = Graph::new();
                let nodes = p.register(&mut g, "").unwrap();
                let out = forward(&mut g, &nodes, &batch.inputs).unwrap();
                let l = loss_cl(&mut g, out.projections, &batch.labels, 0.5).unwrap();
                g.value(l).item()
            };
            prop_assert!((cl(&b) - cl(&shuffled)).abs() < 1e-12);
        }

        #[test]
        fn loss_gradients_match_finite_differences(seed: u64) {
            let f = loss_fixture(seed);
            let mut g = Graph::new();
            let nodes = f.params.register(&mut g, "").unwrap();
            let loss = loss_total(&mut g, &nodes, &f.query, LossWeights::default()).unwrap();
            let r = finite_difference_check(&mut g, loss, &PARAM_NAMES, 1e-5).unwrap();
            prop_assert!(r.max_rel_error < 1e-5, "{:?}", r);
        }
    }
}
