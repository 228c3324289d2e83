//! Online task construction: unlabeled images become pseudo-labeled episodes.
//!
//! A batch draws `N` distinct source images and splits them into `K` episodes
//! of `N / K` classes. Each source yields `M` augmented views; the first `M1`
//! go to the support set and the rest to the query set. A view's label is the
//! position of its source within the episode.

use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};

use crate::augment::{apply_pipeline, sample_pipeline, AugmentationLevel};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;
use crate::synth::SyntheticDataset;

#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub image: Image,
    pub label: usize,
    /// Index of the source image in the pool.
    pub source: usize,
    /// Which of the source's views this is (`0..M`).
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub way: usize,
    pub support: Vec<View>,
    pub query: Vec<View>,
    /// Pool index of the source behind each label.
    pub source_ids: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaskParams {
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub m1: usize,
    pub level: AugmentationLevel,
}

impl TaskParams {
    pub fn way(&self) -> usize {
        self.n / self.k
    }

    pub fn m2(&self) -> usize {
        self.m - self.m1
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || !self.n.is_multiple_of(self.k) {
            return Err(Error::validation(format!(
                "N = {} must be a positive multiple of K = {}",
                self.n, self.k
            )));
        }
        if self.m1 == 0 || self.m1 >= self.m {
            return Err(Error::validation(format!(
                "M1 = {} must lie in [1, M - 1] for M = {}",
                self.m1, self.m
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeBatch {
    pub episodes: Vec<Episode>,
    pub params: TaskParams,
    pub seed: u64,
}

/// Builds `K` episodes from `N` sources drawn without replacement from `pool`.
pub fn construct_tasks(pool: &[Image], params: TaskParams, seed: u64) -> Result<EpisodeBatch> {
    params.validate()?;
    if pool.len() < params.n {
        return Err(Error::validation(format!(
            "pool of {} images is smaller than N = {}",
            pool.len(),
            params.n
        )));
    }
    let mut order_rng = rng::seeded(rng::derive(seed, &[u64::MAX]));
    let sources = index::sample(&mut order_rng, pool.len(), params.n).into_vec();
    let way = params.way();
    let mut episodes = Vec::with_capacity(params.k);
    for (e, ids) in sources.chunks(way).enumerate() {
        let mut support = Vec::with_capacity(way * params.m1);
        let mut query = Vec::with_capacity(way * params.m2());
        for (label, &source) in ids.iter().enumerate() {
            for v in 0..params.m {
                let view_seed = rng::derive(seed, &[e as u64, label as u64, v as u64]);
                let pipeline = sample_pipeline(params.level, rng::derive(view_seed, &[0]));
                let image = apply_pipeline(&pool[source], &pipeline, rng::derive(view_seed, &[1]))?;
                let view = View {
                    image,
                    label,
                    source,
                    index: v,
                };
                if v < params.m1 {
                    support.push(view);
                } else {
                    query.push(view);
                }
            }
        }
        episodes.push(Episode {
            way,
            support,
            query,
            source_ids: ids.to_vec(),
        });
    }
    Ok(EpisodeBatch {
        episodes,
        params,
        seed,
    })
}

/// Draws `n` images without replacement.
pub fn resample_pool(dataset: &SyntheticDataset, n: usize, seed: u64) -> Result<Vec<Image>> {
    if dataset.is_empty() {
        return Err(Error::validation("cannot sample from an empty dataset"));
    }
    if n > dataset.len() {
        return Err(Error::validation(format!(
            "cannot draw {n} images from {}",
            dataset.len()
        )));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    idx.shuffle(&mut rng::seeded(seed));
    Ok(idx[..n].iter().map(|&i| dataset.images[i].clone()).collect())
}

impl EpisodeBatch {
    /// Checks the counting, labeling and disjointness invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let p = self.params;
        let fail = |msg: String| Err(Error::validation(msg));
        if self.episodes.len() != p.k {
            return fail(format!("{} episodes, expected {}", self.episodes.len(), p.k));
        }
        let mut all_sources = BTreeSet::new();
        for (e, ep) in self.episodes.iter().enumerate() {
            if ep.way != p.way() || ep.source_ids.len() != p.way() {
                return fail(format!("episode {e} has way {}", ep.way));
            }
            for &s in &ep.source_ids {
                if !all_sources.insert(s) {
                    return fail(format!("source {s} used twice"));
                }
            }
            for (set, per_label) in [(&ep.support, p.m1), (&ep.query, p.m2())] {
                let mut counts = vec![0; ep.way];
                for v in set {
                    if v.label >= ep.way {
                        return fail(format!("episode {e}: label {} out of range", v.label));
                    }
                    if ep.source_ids[v.label] != v.source {
                        return fail(format!("episode {e}: label {} mixes sources", v.label));
                    }
                    counts[v.label] += 1;
                }
                if counts.iter().any(|&c| c != per_label) {
                    return fail(format!("episode {e}: per-label counts {counts:?}"));
                }
            }
            let support_ids: BTreeSet<_> = ep.support.iter().map(|v| (v.source, v.index)).collect();
            let query_ids: BTreeSet<_> = ep.query.iter().map(|v| (v.source, v.index)).collect();
            if support_ids.len() != ep.support.len()
                || query_ids.len() != ep.query.len()
                || !support_ids.is_disjoint(&query_ids)
            {
                return fail(format!("episode {e}: support and query views overlap"));
            }
        }
        if all_sources.len() != p.n {
            return fail(format!("{} distinct sources, expected {}", all_sources.len(), p.n));
        }
        Ok(())
    }
}
