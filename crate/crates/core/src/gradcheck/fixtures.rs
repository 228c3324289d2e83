//! Small, well-conditioned model instances for finite-difference checks.

use rand::Rng;

use crate::autodiff::Graph;
use crate::model::{forward, Batch, ModelDims, ParamSet};
use crate::rng;
use crate::tensor::Tensor;

/// 138 parameters.
pub const TINY_DIMS: ModelDims = ModelDims {
    input: 8,
    hidden: 6,
    projection: 4,
    classes: 2,
};

/// Below this pre-normalization projection norm, central differences at
/// step 1e-5 lose accuracy to curvature rather than to gradient errors.
pub const MIN_PROJECTION_NORM: f64 = 0.3;

/// 379 parameters, 3 classes.
pub const SMALL_DIMS: ModelDims = ModelDims {
    input: 16,
    hidden: 10,
    projection: 6,
    classes: 3,
};

/// An episode with two support and two query views per class.
pub struct LossFixture {
    pub params: ParamSet,
    pub support: Batch,
    pub query: Batch,
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

/// Smallest row norm of the projection head's output before normalization.
pub fn min_projection_norm(params: &ParamSet, inputs: &Tensor) -> f64 {
    let mut g = Graph::new();
    let nodes = params.constants(&mut g);
    let out = forward(&mut g, &nodes, inputs).expect("fixture shapes agree");
    let wp = g.value(nodes.get("projection.weight")).clone();
    let bp = g.value(nodes.get("projection.bias")).clone();
    let h = g.value(out.features);
    let (rows, hidden) = h.dims2().expect("matrix");
    let p = bp.len();
    (0..rows)
        .map(|i| {
            (0..p)
                .map(|j| {
                    let v = bp.data()[j]
                        + (0..hidden)
                            .map(|k| h.row(i)[k] * wp.data()[k * p + j])
                            .sum::<f64>();
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}

/// [`loss_fixture_with`] at [`TINY_DIMS`].
pub fn loss_fixture(seed: u64) -> LossFixture {
    loss_fixture_with(TINY_DIMS, seed)
}

/// Deterministic in `seed`; redraws parameters until every projection is
/// comfortably away from the origin.
pub fn loss_fixture_with(dims: ModelDims, seed: u64) -> LossFixture {
    let labels: Vec<usize> = (0..dims.classes).flat_map(|c| [c, c]).collect();
    let support = random_batch(rng::derive(seed, &[1]), labels.clone(), dims.input);
    let query = random_batch(rng::derive(seed, &[2]), labels, dims.input);
    for attempt in 0.. {
        let params = ParamSet::init(dims, rng::derive(seed, &[0, attempt]));
        if min_projection_norm(&params, &support.inputs) >= MIN_PROJECTION_NORM
            && min_projection_norm(&params, &query.inputs) >= MIN_PROJECTION_NORM
        {
            return LossFixture {
                params,
                support,
                query,
            };
        }
    }
    unreachable!()
}
