//! End-to-end runs: training in the four modes, few-shot evaluation, the
//! gradient-check suite, the descent probe, the spectral demo and the sweeps.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::seq::index;

use crate::augment::AugmentationLevel;
use crate::autodiff::{check_scaled, Graph, NodeId, DIFFERENTIABLE_OPS};
use crate::bilevel::{
    adapt_values, inner_adapt, kl_matching_loss, meta_step_bootstrapped, meta_step_standard,
    bootstrap_descent_probe, EpisodeObjective, Objective, ProbeRow,
};
use crate::checkpoint::Checkpoint;
use crate::config::{level_name, RunConfig, RunMode};
use crate::error::{Error, Result};
use crate::gradcheck::{loss_fixture_with, op_case, SMALL_DIMS, TINY_DIMS};
use crate::image::Image;
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::model::{predict, Batch, LossWeights, ModelDims, ParamSet};
use crate::rng;
use crate::spectral::{self, DiscreteViewSpace};
use crate::synth::{self, SyntheticDataset};
use crate::taskgen::{construct_tasks, Episode};
use crate::tensor::Tensor;

pub const DEFAULT_CLASSES: usize = 16;
pub const DEFAULT_PER_CLASS: usize = 40;

/// Seed-path tags keeping the independent random streams apart.
const TAG_INIT: u64 = 1;
const TAG_TASKS: u64 = 2;
const TAG_EVAL: u64 = 3;
const TAG_PROBE: u64 = 4;

/// Unlabeled training pool plus labeled, class-disjoint evaluation data.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub train: SyntheticDataset,
    pub eval: SyntheticDataset,
}

impl Benchmark {
    pub fn from_dataset(dataset: &SyntheticDataset, config: &RunConfig) -> Result<Self> {
        let (train, eval) = synth::split(dataset, 1.0 - config.eval_fraction, config.split_seed)?;
        Ok(Self { train, eval })
    }

    /// The dataset `gen-data` writes by default.
    pub fn default_synthetic(config: &RunConfig) -> Result<Self> {
        let ds = synth::generate(DEFAULT_CLASSES, DEFAULT_PER_CLASS, 0)?;
        Self::from_dataset(&ds, config)
    }
}

pub fn model_dims(config: &RunConfig, pixels: usize) -> ModelDims {
    ModelDims {
        input: pixels,
        hidden: config.hidden,
        projection: config.projection,
        classes: config.task_params().way(),
    }
}

fn pixels_of(ds: &SyntheticDataset) -> Result<usize> {
    ds.images
        .first()
        .map(|i| i.pixels().len())
        .ok_or_else(|| Error::validation("empty dataset"))
}

pub fn initial_params(config: &RunConfig, pixels: usize) -> ParamSet {
    ParamSet::init(model_dims(config, pixels), rng::derive(config.seed, &[TAG_INIT]))
}

fn objective(ep: &Episode, weights: LossWeights) -> Result<EpisodeObjective> {
    Ok(EpisodeObjective {
        support: Batch::from_views(&ep.support)?,
        query: Batch::from_views(&ep.query)?,
        weights,
    })
}

/// The episodes of meta step `step` (1-based).
pub fn training_objectives(
    config: &RunConfig,
    pool: &[Image],
    step: u64,
) -> Result<Vec<EpisodeObjective>> {
    let batch = construct_tasks(pool, config.task_params(), rng::derive(config.seed, &[TAG_TASKS, step]))?;
    batch
        .episodes
        .iter()
        .map(|ep| objective(ep, config.loss_weights()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub theta: Vec<Tensor>,
    pub outer_loss: f64,
    pub kl_value: Option<f64>,
    pub mean_inner_loss: f64,
}

/// One meta step of `config.mode`. Scratch mode leaves `theta` unchanged.
pub fn meta_step(config: &RunConfig, objs: &[EpisodeObjective], theta: &[Tensor]) -> Result<StepOutcome> {
    let (l, a, b) = (config.inner_steps, config.alpha, config.beta);
    let out = match config.mode {
        RunMode::Scratch => StepOutcome {
            theta: theta.to_vec(),
            outer_loss: 0.0,
            kl_value: None,
            mean_inner_loss: 0.0,
        },
        RunMode::MetricOnly => {
            // Carry the adapted weights forward, averaged over episodes.
            let mut sum: Option<Vec<Tensor>> = None;
            let (mut outer, mut inner) = (0.0, 0.0);
            for obj in objs {
                let (w, losses) = adapt_values(obj, theta, l, a)?;
                inner += losses.iter().sum::<f64>() / losses.len().max(1) as f64;
                let mut g = Graph::new();
                let wn: Vec<NodeId> = w.iter().map(|t| g.constant(t.clone())).collect();
                let q = obj.outer_loss(&mut g, &wn)?;
                outer += g.value(q).item();
                sum = Some(match sum {
                    None => w,
                    Some(s) => s.iter().zip(&w).map(|(x, y)| x.zip_map(y, |p, q| p + q)).collect(),
                });
            }
            let k = objs.len() as f64;
            let theta = sum
                .ok_or_else(|| Error::validation("no episodes"))?
                .iter()
                .map(|t| t.map(|v| v / k))
                .collect();
            StepOutcome {
                theta,
                outer_loss: outer / k,
                kl_value: None,
                mean_inner_loss: inner / k,
            }
        }
        RunMode::MetaSsl => {
            let r = meta_step_standard(objs, theta, l, a, b, config.meta_gradient)?;
            StepOutcome {
                theta: r.theta_after,
                outer_loss: r.outer_loss,
                kl_value: None,
                mean_inner_loss: r.mean_inner_loss,
            }
        }
        RunMode::Bmssl => {
            let r = meta_step_bootstrapped(objs, theta, l, config.delta, a, b)?;
            StepOutcome {
                theta: r.theta_after,
                outer_loss: r.outer_loss,
                kl_value: r.kl_value,
                mean_inner_loss: r.mean_inner_loss,
            }
        }
    };
    for v in [out.outer_loss, out.mean_inner_loss] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss became {v}")));
        }
    }
    if !out.theta.iter().all(Tensor::all_finite) {
        return Err(Error::NonFinite("meta-parameters became non-finite".into()));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub rows: Vec<MetricsRow>,
    pub final_accuracy: f64,
    /// Time spent in meta steps, excluding evaluation.
    pub train_time: Duration,
}

impl TrainOutcome {
    pub fn steps_per_second(&self) -> f64 {
        self.checkpoint.meta_step as f64 / self.train_time.as_secs_f64().max(1e-9)
    }
}

/// Runs `config.meta_steps` meta steps, writing one metrics row per step,
/// then evaluates the result. Scratch mode runs no steps.
pub fn train(config: &RunConfig, bench: &Benchmark, mut metrics: Option<&mut MetricsWriter>) -> Result<TrainOutcome> {
    config.validate()?;
    let pixels = pixels_of(&bench.train)?;
    let mut params = initial_params(config, pixels);
    let dims = params.dims();
    let steps = if config.mode == RunMode::Scratch { 0 } else { config.meta_steps };
    let start = Instant::now();
    let mut train_time = Duration::ZERO;
    let mut rows = Vec::with_capacity(steps);
    let mut final_accuracy = None;
    for step in 1..=steps as u64 {
        let t0 = Instant::now();
        let objs = training_objectives(config, &bench.train.images, step)?;
        let out = meta_step(config, &objs, params.tensors())?;
        params = ParamSet::from_named(dims, crate::model::PARAM_NAMES.iter().map(|n| n.to_string()).zip(out.theta).collect())?;
        train_time += t0.elapsed();
        let scheduled = step == steps as u64 || (config.eval_every > 0 && step % config.eval_every as u64 == 0);
        let eval_accuracy = if scheduled {
            let acc = evaluate_config(&params, config, &bench.eval)?.mean_accuracy;
            if step == steps as u64 {
                final_accuracy = Some(acc);
            }
            Some(acc)
        } else {
            None
        };
        let row = MetricsRow {
            meta_step: step,
            outer_loss: out.outer_loss,
            kl_value: out.kl_value,
            mean_inner_loss: out.mean_inner_loss,
            eval_accuracy,
            wallclock_seconds: config.wallclock.then(|| start.elapsed().as_secs_f64()),
        };
        if let Some(w) = metrics.as_deref_mut() {
            w.write(&row)?;
        }
        rows.push(row);
    }
    let final_accuracy = match final_accuracy {
        Some(a) => a,
        None => evaluate_config(&params, config, &bench.eval)?.mean_accuracy,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint {
            params,
            config: config.clone(),
            meta_step: steps as u64,
        },
        rows,
        final_accuracy,
        train_time,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalSettings {
    pub way: usize,
    pub shot: usize,
    pub query: usize,
    pub episodes: usize,
    pub steps: usize,
    pub alpha: f64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Draw a fresh initialization per episode from this seed instead of
    /// adapting from the given parameters.
    pub reinit_seed: Option<u64>,
}

impl EvalSettings {
    pub fn from_config(config: &RunConfig) -> Self {
        let seed = rng::derive(config.seed, &[TAG_EVAL]);
        Self {
            way: config.eval_way,
            shot: config.eval_shot,
            query: config.eval_query,
            episodes: config.eval_episodes,
            steps: config.eval_steps,
            alpha: config.alpha,
            weights: config.loss_weights(),
            seed,
            reinit_seed: (config.mode == RunMode::Scratch).then(|| rng::derive(seed, &[TAG_INIT])),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub mean_accuracy: f64,
    pub accuracies: Vec<f64>,
}

/// Truncates or zero-pads the classifier head to `way` outputs.
pub fn fit_head(params: &ParamSet, way: usize) -> Result<ParamSet> {
    let dims = params.dims();
    if dims.classes == way {
        return Ok(params.clone());
    }
    let new_dims = ModelDims { classes: way, ..dims };
    let mut named = Vec::new();
    for (name, t) in params.iter() {
        let t = match name {
            "classifier.weight" => {
                let (h, n) = t.dims2().expect("matrix");
                let data = (0..h)
                    .flat_map(|i| (0..way).map(move |j| (i, j)))
                    .map(|(i, j)| if j < n { t.data()[i * n + j] } else { 0.0 })
                    .collect();
                Tensor::new(vec![h, way], data)?
            }
            "classifier.bias" => {
                Tensor::new(vec![way], (0..way).map(|j| t.data().get(j).copied().unwrap_or(0.0)).collect())?
            }
            _ => t.clone(),
        };
        named.push((name.to_string(), t));
    }
    ParamSet::from_named(new_dims, named)
}

/// Few-shot accuracy on true labels: each episode samples `way` classes,
/// `shot` support and `query` query images per class, adapts `steps` inner
/// steps and scores the query predictions. One-shot episodes drop the
/// contrastive term, which needs two views of a class.
pub fn evaluate_fewshot(params: &ParamSet, data: &SyntheticDataset, s: &EvalSettings) -> Result<EvalReport> {
    let classes = data.classes();
    if classes.len() < s.way {
        return Err(Error::validation(format!(
            "{} evaluation classes cannot fill a {}-way episode",
            classes.len(),
            s.way
        )));
    }
    let by_class: Vec<Vec<usize>> = classes.iter().map(|&c| data.indices_of(c)).collect();
    let need = s.shot + s.query;
    if let Some(c) = by_class.iter().position(|v| v.len() < need) {
        return Err(Error::validation(format!(
            "class {} has {} images, need {need}",
            classes[c],
            by_class[c].len()
        )));
    }
    let weights = if s.shot < 2 {
        LossWeights { lambda: 0.0, ..s.weights }
    } else {
        s.weights
    };
    let shared = fit_head(params, s.way)?;
    let mut accuracies = Vec::with_capacity(s.episodes);
    for e in 0..s.episodes as u64 {
        let mut r = rng::seeded(rng::derive(s.seed, &[e]));
        let chosen = index::sample(&mut r, classes.len(), s.way).into_vec();
        let (mut sup, mut sup_labels, mut qry, mut qry_labels) = (vec![], vec![], vec![], vec![]);
        for (label, &c) in chosen.iter().enumerate() {
            let pick = index::sample(&mut r, by_class[c].len(), need).into_vec();
            for (j, &p) in pick.iter().enumerate() {
                let img = &data.images[by_class[c][p]];
                if j < s.shot {
                    sup.push(img);
                    sup_labels.push(label);
                } else {
                    qry.push(img);
                    qry_labels.push(label);
                }
            }
        }
        let obj = EpisodeObjective {
            support: Batch::from_images(&sup, sup_labels)?,
            query: Batch::from_images(&qry, qry_labels)?,
            weights,
        };
        let start = match s.reinit_seed {
            Some(seed) => ParamSet::init(shared.dims(), rng::derive(seed, &[e])),
            None => shared.clone(),
        };
        let (w, _) = adapt_values(&obj, start.tensors(), s.steps, s.alpha)?;
        if !w.iter().all(Tensor::all_finite) {
            return Err(Error::NonFinite(format!("adapted weights in episode {e}")));
        }
        let adapted = ParamSet::unflatten(start.dims(), &w.iter().flat_map(|t| t.data().iter().copied()).collect::<Vec<_>>())?;
        let pred = predict(&adapted, &obj.query.inputs)?;
        let correct = pred.iter().zip(&obj.query.labels).filter(|(a, b)| a == b).count();
        accuracies.push(correct as f64 / pred.len() as f64);
    }
    let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
    Ok(EvalReport {
        mean_accuracy,
        accuracies,
    })
}

pub fn evaluate_config(params: &ParamSet, config: &RunConfig, data: &SyntheticDataset) -> Result<EvalReport> {
    evaluate_fewshot(params, data, &EvalSettings::from_config(config))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradcheckScale {
    Tiny,
    Small,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub coordinates: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
    pub tolerance: f64,
    pub elapsed: Duration,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.max_rel_error < self.tolerance)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            let verdict = if r.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
            let _ = writeln!(s, "{:<24} {:>12.3e} {:>6} {verdict}", r.name, r.max_rel_error, r.coordinates);
        }
        let _ = writeln!(
            s,
            "{} checks, tolerance {:e}, {:.1}s: {}",
            self.results.len(),
            self.tolerance,
            self.elapsed.as_secs_f64(),
            if self.passed() { "passed" } else { "FAILED" }
        );
        s
    }
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
const FD_STEP: f64 = 1e-5;

/// Every differentiable op, the combined inner loss, the query-loss
/// meta-gradient and the KL meta-gradient against central differences.
/// `corrupt` names a check whose analytic gradient is scaled by 1.01.
pub fn gradcheck(scale: GradcheckScale, seed: u64, corrupt: Option<&str>) -> Result<GradcheckReport> {
    let start = Instant::now();
    let factor = |name: &str| if corrupt == Some(name) { 1.01 } else { 1.0 };
    let mut results = Vec::new();
    for &op in DIFFERENTIABLE_OPS {
        let mut case = op_case(op, rng::derive(seed, &[0]))?;
        let r = check_scaled(&mut case.graph, case.output, &case.leaves, FD_STEP, factor(op))?;
        results.push(CheckResult {
            name: op.to_string(),
            max_rel_error: r.max_rel_error,
            coordinates: r.coordinates,
        });
    }
    let dims = match scale {
        GradcheckScale::Tiny => TINY_DIMS,
        GradcheckScale::Small => SMALL_DIMS,
    };
    let f = loss_fixture_with(dims, rng::derive(seed, &[1]));
    let obj = EpisodeObjective {
        support: f.support,
        query: f.query,
        weights: LossWeights::default(),
    };
    let names: Vec<String> = (0..f.params.tensors().len()).map(|i| format!("theta.{i}")).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    let (steps, alpha) = (2, 0.1);
    for check in ["combined_loss", "meta_gradient", "kl_meta_gradient"] {
        let mut g = Graph::new();
        let th: Vec<NodeId> = f
            .params
            .tensors()
            .iter()
            .zip(&names)
            .map(|(t, n)| g.leaf(*n, t.clone()))
            .collect::<Result<_>>()?;
        let out = match check {
            "combined_loss" => obj.inner_loss(&mut g, &th)?,
            "meta_gradient" => {
                let traj = inner_adapt(&obj, &mut g, &th, steps, alpha, true)?;
                let w = traj.last().to_vec();
                obj.outer_loss(&mut g, &w)?
            }
            _ => {
                let traj = inner_adapt(&obj, &mut g, &th, steps, alpha, true)?;
                let w = traj.last().to_vec();
                let target = adapt_values(&obj, &traj.values(&g, steps), 2, alpha)?.0;
                kl_matching_loss(&obj, &mut g, &target, &w)?
            }
        };
        let r = check_scaled(&mut g, out, &names, FD_STEP, factor(check))?;
        results.push(CheckResult {
            name: check.to_string(),
            max_rel_error: r.max_rel_error,
            coordinates: r.coordinates,
        });
    }
    Ok(GradcheckReport {
        results,
        tolerance: GRADCHECK_TOLERANCE,
        elapsed: start.elapsed(),
    })
}

/// Probe of one benchmark episode.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeEpisode {
    pub episode: u64,
    pub rows: Vec<ProbeRow>,
}

/// Descent probe on `episodes` seeded default-benchmark episodes, each with
/// the run's initial parameters.
pub fn descent_probe(
    config: &RunConfig,
    bench: &Benchmark,
    episodes: usize,
    betas: &[f64],
) -> Result<Vec<ProbeEpisode>> {
    let pixels = pixels_of(&bench.train)?;
    let theta = initial_params(config, pixels);
    (0..episodes as u64)
        .map(|e| {
            let batch = construct_tasks(
                &bench.train.images,
                config.task_params(),
                rng::derive(config.seed, &[TAG_PROBE, e]),
            )?;
            let obj = objective(&batch.episodes[0], config.loss_weights())?;
            let rows = bootstrap_descent_probe(
                std::slice::from_ref(&obj),
                theta.tensors(),
                config.inner_steps,
                config.delta,
                config.alpha,
                betas,
            )?;
            Ok(ProbeEpisode { episode: e, rows })
        })
        .collect()
}

pub fn probe_csv(probes: &[ProbeEpisode]) -> String {
    let mut s = String::from("episode,beta,change,kl,predicted\n");
    for p in probes {
        for r in &p.rows {
            let _ = writeln!(s, "{},{},{},{},{}", p.episode, r.beta, r.change, r.kl, r.predicted);
        }
    }
    s
}

/// Eigenvalue spectrum and minimax gaps of one random view space.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralDemo {
    pub eigenvalues: Vec<f64>,
    pub report: spectral::OptimalityReport,
    pub degenerate_split: bool,
}

impl SpectralDemo {
    pub fn spectrum_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, v) in self.eigenvalues.iter().enumerate() {
            let _ = writeln!(s, "{i},{v}");
        }
        s
    }

    /// The eigen-subspace appears as `eigen`, random ones by index.
    pub fn gaps_csv(&self) -> String {
        let mut s = format!("subspace_id,gap\neigen,{}\n", self.report.eigen_gap);
        for (i, g) in self.report.random_gaps.iter().enumerate() {
            let _ = writeln!(s, "{i},{g}");
        }
        s
    }
}

pub fn spectral_demo(views: usize, sources: usize, d: usize, samples: usize, seed: u64) -> Result<SpectralDemo> {
    let space = DiscreteViewSpace::random(views, sources, seed);
    let chain = spectral::build_chain(&space)?;
    let eig = spectral::top_eigenfunctions(&chain, d)?;
    if d >= views {
        return Err(Error::validation(format!("d = {d} must be below the {views} views")));
    }
    let eps = spectral::default_epsilon(&eig, d);
    let report = spectral::compare_with_random(&chain, d, eps, samples, rng::derive(seed, &[1]))?;
    Ok(SpectralDemo {
        eigenvalues: eig.eigenvalues,
        report,
        degenerate_split: eig.degenerate_split,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    Delta,
    Augmentation,
    Structure,
}

impl std::str::FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "delta" => Ok(Self::Delta),
            "augmentation" => Ok(Self::Augmentation),
            "structure" => Ok(Self::Structure),
            _ => Err(Error::validation(format!("unknown ablation {s:?}"))),
        }
    }
}

pub const DELTA_GRID: [usize; 5] = [1, 5, 10, 15, 20];

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub setting: String,
    pub accuracy: f64,
    pub steps_per_second: Option<f64>,
}

/// The configs one sweep runs, labeled by setting.
pub fn ablation_configs(kind: AblationKind, base: &RunConfig) -> Vec<(String, RunConfig)> {
    match kind {
        AblationKind::Delta => DELTA_GRID
            .iter()
            .map(|&d| {
                let mut c = base.clone();
                c.mode = RunMode::Bmssl;
                c.delta = d;
                (d.to_string(), c)
            })
            .collect(),
        AblationKind::Augmentation => AugmentationLevel::ALL
            .iter()
            .map(|&l| {
                let mut c = base.clone();
                c.level = l;
                (level_name(l).to_string(), c)
            })
            .collect(),
        AblationKind::Structure => [("M1", RunMode::Scratch), ("M2", RunMode::MetricOnly), ("M3", RunMode::Bmssl)]
            .iter()
            .map(|&(name, mode)| {
                let mut c = base.clone();
                c.mode = mode;
                (name.to_string(), c)
            })
            .collect(),
    }
}

pub fn ablate(kind: AblationKind, base: &RunConfig, bench: &Benchmark) -> Result<Vec<AblationCell>> {
    ablation_configs(kind, base)
        .into_iter()
        .map(|(setting, c)| {
            let out = train(&c, bench, None)?;
            let timed = c.wallclock && out.checkpoint.meta_step > 0;
            Ok(AblationCell {
                setting,
                accuracy: out.final_accuracy,
                steps_per_second: timed.then(|| out.steps_per_second()),
            })
        })
        .collect()
}

pub fn ablation_csv(kind: AblationKind, cells: &[AblationCell]) -> String {
    let sweep = match kind {
        AblationKind::Delta => "delta",
        AblationKind::Augmentation => "augmentation",
        AblationKind::Structure => "structure",
    };
    let mut s = String::from("sweep,setting,accuracy,meta_steps_per_second\n");
    for c in cells {
        let sps = c.steps_per_second.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{sweep},{},{},{sps}", c.setting, c.accuracy);
    }
    s
}
