//! Positive-pair Markov chains on finite view spaces.
//!
//! Functions on views carry the `p(a)`-weighted inner product. Working in
//! whitened coordinates `u = D^{1/2} g` turns it into the Euclidean one, the
//! transition operator into the symmetric `S = D^{-1/2} J D^{-1/2}`, and the
//! positive-pair variation `E[(g(a1) - g(a2))^2]` into `u' C u` with
//! `C = 2 (I - S)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng;

const STOCHASTIC_TOL: f64 = 1e-12;
/// Eigenvalues closer than this are treated as one cluster.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteViewSpace {
    /// `p(a | x)`, one row per source.
    pub conditional: Vec<Vec<f64>>,
    /// `p(x)`.
    pub prior: Vec<f64>,
}

impl DiscreteViewSpace {
    pub fn views(&self) -> usize {
        self.conditional.first().map_or(0, Vec::len)
    }

    pub fn sources(&self) -> usize {
        self.prior.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.views();
        if m == 0 || self.conditional.len() != self.prior.len() {
            return Err(Error::validation("need one conditional row per source and at least one view"));
        }
        let check = |row: &[f64], what: &str| -> Result<()> {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::validation(format!("{what} has negative or non-finite entries")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::validation(format!("{what} sums to {s}")));
            }
            Ok(())
        };
        check(&self.prior, "prior")?;
        for (x, row) in self.conditional.iter().enumerate() {
            if row.len() != m {
                return Err(Error::validation(format!("conditional row {x} has {} views", row.len())));
            }
            check(row, &format!("conditional row {x}"))?;
        }
        Ok(())
    }

    /// A random space where each source spreads over a random subset of
    /// views. Every view is reachable from at least one source.
    pub fn random(views: usize, sources: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed);
        let mut prior: Vec<f64> = (0..sources).map(|_| r.random_range(0.2..1.0)).collect();
        normalize(&mut prior);
        let conditional = (0..sources)
            .map(|x| {
                let mut row: Vec<f64> = (0..views)
                    .map(|a| {
                        if a % sources == x || r.random_bool(0.35) {
                            r.random_range(0.05..1.0)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                normalize(&mut row);
                row
            })
            .collect();
        Self { conditional, prior }
    }
}

fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    for x in v {
        *x /= s;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PositivePairChain {
    /// `p+(a1, a2)`, exactly symmetric.
    pub joint: DMatrix<f64>,
    /// `p(a)`.
    pub marginal: DVector<f64>,
    /// `p+(a2 | a1)`, row-stochastic.
    pub transition: DMatrix<f64>,
}

pub fn build_chain(space: &DiscreteViewSpace) -> Result<PositivePairChain> {
    space.validate()?;
    let m = space.views();
    let mut joint = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v: f64 = space
                .conditional
                .iter()
                .zip(&space.prior)
                .map(|(row, px)| row[i] * row[j] * px)
                .sum();
            joint[(i, j)] = v;
            joint[(j, i)] = v;
        }
    }
    let marginal = DVector::from_iterator(m, (0..m).map(|i| joint.row(i).iter().sum::<f64>()));
    if let Some(a) = marginal.iter().position(|&p| p <= 0.0) {
        return Err(Error::validation(format!("view {a} has zero marginal probability")));
    }
    let mut transition = joint.clone();
    for i in 0..m {
        let p = marginal[i];
        transition.row_mut(i).iter_mut().for_each(|v| *v /= p);
    }
    Ok(PositivePairChain {
        joint,
        marginal,
        transition,
    })
}

impl PositivePairChain {
    pub fn views(&self) -> usize {
        self.marginal.len()
    }

    /// `D^{-1/2} J D^{-1/2}`.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let m = self.views();
        let s = self.marginal.map(|p| 1.0 / p.sqrt());
        DMatrix::from_fn(m, m, |i, j| s[i] * self.joint[(i, j)] * s[j])
    }

    /// Connected components of the graph with an edge wherever `joint > 0`.
    pub fn components(&self) -> usize {
        let m = self.views();
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for i in 0..m {
            for j in i + 1..m {
                if self.joint[(i, j)] > 0.0 {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
        (0..m).filter(|&i| find(&mut parent, i) == i).count()
    }

    /// `E[(g(a1) - g(a2))^2]` under the positive-pair distribution.
    pub fn variation(&self, g: &[f64]) -> f64 {
        let m = self.views();
        let mut v = 0.0;
        for i in 0..m {
            for j in 0..m {
                v += self.joint[(i, j)] * (g[i] - g[j]).powi(2);
            }
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Eigenfunctions {
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// `m x d`; columns are `p`-orthonormal eigenfunctions.
    pub functions: DMatrix<f64>,
    /// Set when eigenvalue `d` and `d + 1` coincide, so the subspace is not unique.
    pub degenerate_split: bool,
}

fn sorted_eigen(s: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (values, vectors)
}

pub fn top_eigenfunctions(chain: &PositivePairChain, d: usize) -> Result<Eigenfunctions> {
    let m = chain.views();
    if d == 0 || d > m {
        return Err(Error::validation(format!("d = {d} must lie in [1, {m}]")));
    }
    let (values, vectors) = sorted_eigen(chain.symmetrized());
    let inv_sqrt = chain.marginal.map(|p| 1.0 / p.sqrt());
    let mut functions = DMatrix::from_fn(m, d, |r, c| vectors[(r, c)] * inv_sqrt[r]);
    for mut col in functions.column_iter_mut() {
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = col.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if pivot < 0.0 {
            col.neg_mut();
        }
    }
    let degenerate_split = d < m && (values[d - 1] - values[d]).abs() < DEGENERACY_TOL;
    Ok(Eigenfunctions {
        eigenvalues: values,
        functions,
        degenerate_split,
    })
}

/// Orthonormal basis (Euclidean) of the whitened span of `subspace`.
fn whitened_basis(chain: &PositivePairChain, subspace: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = chain.views();
    if subspace.nrows() != m {
        return Err(Error::Shape(format!(
            "subspace has {} rows for {m} views",
            subspace.nrows()
        )));
    }
    let sqrt_p = chain.marginal.map(f64::sqrt);
    let w = DMatrix::from_fn(m, subspace.ncols(), |r, c| subspace[(r, c)] * sqrt_p[r]);
    let svd = w.svd(true, false);
    let smax = svd.singular_values.max();
    let rank_tol = 1e-10 * smax.max(f64::MIN_POSITIVE);
    if smax == 0.0 || svd.singular_values.iter().any(|&s| s <= rank_tol) {
        return Err(Error::validation("subspace columns are linearly dependent"));
    }
    Ok(svd.u.expect("requested"))
}

fn top_eigenpair(a: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (values, vectors) = sorted_eigen(a.clone());
    (values[0], vectors.column(0).into_owned())
}

/// Worst-case squared residual `||g - proj g||_p^2` over unit-norm `g` with
/// positive-pair variation at most `epsilon`.
///
/// Solved through the dual `min_{mu >= 0} lambda_max(R - mu C) + mu epsilon`,
/// which is tight because the joint numerical range of two quadratic forms on
/// the sphere is convex once there are at least three dimensions.
pub fn minimax_gap(chain: &PositivePairChain, subspace: &DMatrix<f64>, epsilon: f64) -> Result<f64> {
    if !(epsilon >= 0.0) {
        return Err(Error::validation(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let m = chain.views();
    let q = whitened_basis(chain, subspace)?;
    let r = DMatrix::identity(m, m) - &q * q.transpose();
    let c = (DMatrix::identity(m, m) - chain.symmetrized()) * 2.0;

    if epsilon == 0.0 {
        // Feasible set is the unit sphere of null(C).
        let (cv, cvec) = sorted_eigen(c.clone());
        let null: Vec<usize> = (0..m).filter(|&i| cv[i].abs() < 1e-10).collect();
        if null.is_empty() {
            return Ok(0.0);
        }
        let n = DMatrix::from_fn(m, null.len(), |row, k| cvec[(row, null[k])]);
        let restricted = n.transpose() * &r * &n;
        return Ok(top_eigenpair(&restricted).0.max(0.0));
    }
    if m < 3 {
        return Err(Error::validation("the dual bound is exact only for at least 3 views"));
    }

    // phi(mu) is convex with subgradient epsilon - v' C v at the top eigenvector.
    let slope = |mu: f64| {
        let (val, v) = top_eigenpair(&(&r - &c * mu));
        (val + mu * epsilon, epsilon - (v.transpose() * &c * &v)[(0, 0)])
    };
    let (phi0, s0) = slope(0.0);
    if s0 >= 0.0 {
        return Ok(phi0.clamp(0.0, 1.0));
    }
    // A Slater point in null(C) bounds the multiplier by 1 / epsilon.
    let (mut lo, mut hi) = (0.0, 1.0 / epsilon);
    let mut best = phi0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let (phi, s) = slope(mid);
        best = best.min(phi);
        if s < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best = best.min(slope(hi).0).min(slope(lo).0);
    Ok(best.clamp(0.0, 1.0))
}

/// Gaussian `m x d` subspace orthonormalized under the `p`-weighted product.
pub fn random_subspace(chain: &PositivePairChain, d: usize, seed: u64) -> DMatrix<f64> {
    let m = chain.views();
    let mut r = rng::seeded(seed);
    let g: DMatrix<f64> = DMatrix::from_fn(m, d, |_, _| StandardNormal.sample(&mut r));
    let sqrt_p = chain.marginal.map(f64::sqrt);
    let w = DMatrix::from_fn(m, d, |row, c| g[(row, c)] * sqrt_p[row]);
    let q = w.qr().q();
    DMatrix::from_fn(m, d, |row, c| q[(row, c)] / sqrt_p[row])
}

/// Result of comparing the eigen-subspace with random subspaces.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimalityReport {
    pub d: usize,
    pub epsilon: f64,
    pub eigen_gap: f64,
    pub random_gaps: Vec<f64>,
}

impl OptimalityReport {
    pub fn min_random_gap(&self) -> f64 {
        self.random_gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Every random subspace does at least as badly, up to `tol`.
    pub fn eigen_is_optimal(&self, tol: f64) -> bool {
        self.random_gaps.iter().all(|&g| self.eigen_gap <= g + tol)
    }
}

/// Half of the (d+1)-th variation level, `1 - lambda_{d+1}`.
pub fn default_epsilon(eig: &Eigenfunctions, d: usize) -> f64 {
    1.0 - eig.eigenvalues[d]
}

pub fn compare_with_random(
    chain: &PositivePairChain,
    d: usize,
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    let eig = top_eigenfunctions(chain, d)?;
    let eigen_gap = minimax_gap(chain, &eig.functions, epsilon)?;
    let random_gaps = (0..samples)
        .map(|i| {
            let s = random_subspace(chain, d, rng::derive(seed, &[i as u64]));
            minimax_gap(chain, &s, epsilon)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OptimalityReport {
        d,
        epsilon,
        eigen_gap,
        random_gaps,
    })
}
