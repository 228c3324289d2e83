//! Run configuration: a plain-text `key = value` file with validated defaults.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::AugmentationLevel;
use crate::bilevel::MetaGradientMode;
use crate::error::{Error, Result};
use crate::model::LossWeights;
use crate::taskgen::TaskParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunMode {
    /// Fresh random initialization for every evaluation task.
    Scratch,
    /// Inner loop only; the shared weights carry over between batches.
    MetricOnly,
    /// Outer step through the query loss at the adapted weights.
    MetaSsl,
    /// Outer step matching a bootstrapped target.
    Bmssl,
}

impl RunMode {
    pub const ALL: [RunMode; 4] = [
        RunMode::Scratch,
        RunMode::MetricOnly,
        RunMode::MetaSsl,
        RunMode::Bmssl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Scratch => "scratch",
            RunMode::MetricOnly => "metric-only",
            RunMode::MetaSsl => "metassl",
            RunMode::Bmssl => "bmssl",
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::validation(format!("unknown mode {s:?}")))
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn level_name(level: AugmentationLevel) -> &'static str {
    match level {
        AugmentationLevel::A1 => "A1",
        AugmentationLevel::A2 => "A2",
        AugmentationLevel::A3 => "A3",
        AugmentationLevel::A4 => "A4",
    }
}

pub fn parse_level(s: &str) -> Result<AugmentationLevel> {
    AugmentationLevel::ALL
        .into_iter()
        .find(|l| level_name(*l).eq_ignore_ascii_case(s))
        .ok_or_else(|| Error::validation(format!("unknown augmentation level {s:?}")))
}

fn mode_name(m: MetaGradientMode) -> &'static str {
    match m {
        MetaGradientMode::Exact => "exact",
        MetaGradientMode::FirstOrder => "first-order",
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub m1: usize,
    pub inner_steps: usize,
    pub delta: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub tau: f64,
    pub level: AugmentationLevel,
    pub meta_gradient: MetaGradientMode,
    pub meta_steps: usize,
    pub hidden: usize,
    pub projection: usize,
    pub eval_way: usize,
    pub eval_shot: usize,
    pub eval_query: usize,
    pub eval_episodes: usize,
    pub eval_steps: usize,
    /// Evaluate every this many meta steps; 0 evaluates only after the last one.
    pub eval_every: usize,
    pub eval_fraction: f64,
    pub seed: u64,
    pub split_seed: u64,
    /// Record elapsed time in the metrics; off makes the CSV byte-reproducible.
    pub wallclock: bool,
    pub data: PathBuf,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Bmssl,
            n: 16,
            k: 4,
            m: 6,
            m1: 3,
            inner_steps: 5,
            delta: 5,
            alpha: 0.05,
            beta: 0.01,
            lambda: 1.0,
            tau: 0.5,
            level: AugmentationLevel::A4,
            meta_gradient: MetaGradientMode::Exact,
            meta_steps: 300,
            hidden: 64,
            projection: 16,
            eval_way: 4,
            eval_shot: 1,
            eval_query: 15,
            eval_episodes: 200,
            eval_steps: 5,
            eval_every: 0,
            eval_fraction: 0.5,
            seed: 0,
            split_seed: 0,
            wallclock: true,
            data: PathBuf::from("data.bmsd"),
            out: PathBuf::from("run"),
        }
    }
}

pub const KEYS: [&str; 28] = [
    "mode",
    "n",
    "k",
    "m",
    "m1",
    "inner_steps",
    "delta",
    "alpha",
    "beta",
    "lambda",
    "tau",
    "level",
    "meta_gradient",
    "meta_steps",
    "hidden",
    "projection",
    "eval_way",
    "eval_shot",
    "eval_query",
    "eval_episodes",
    "eval_steps",
    "eval_every",
    "eval_fraction",
    "seed",
    "split_seed",
    "wallclock",
    "data",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::validation(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn task_params(&self) -> TaskParams {
        TaskParams {
            n: self.n,
            k: self.k,
            m: self.m,
            m1: self.m1,
            level: self.level,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            lambda: self.lambda,
            tau: self.tau,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "mode" => self.mode = v.parse()?,
            "n" => self.n = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "m" => self.m = parse(key, v)?,
            "m1" => self.m1 = parse(key, v)?,
            "inner_steps" | "L" => self.inner_steps = parse(key, v)?,
            "delta" => self.delta = parse(key, v)?,
            "alpha" => self.alpha = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "lambda" => self.lambda = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "level" => self.level = parse_level(v)?,
            "meta_gradient" => {
                self.meta_gradient = match v {
                    "exact" => MetaGradientMode::Exact,
                    "first-order" => MetaGradientMode::FirstOrder,
                    _ => return Err(Error::validation(format!("unknown meta_gradient {v:?}"))),
                }
            }
            "meta_steps" => self.meta_steps = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "projection" => self.projection = parse(key, v)?,
            "eval_way" => self.eval_way = parse(key, v)?,
            "eval_shot" => self.eval_shot = parse(key, v)?,
            "eval_query" => self.eval_query = parse(key, v)?,
            "eval_episodes" => self.eval_episodes = parse(key, v)?,
            "eval_steps" => self.eval_steps = parse(key, v)?,
            "eval_every" => self.eval_every = parse(key, v)?,
            "eval_fraction" => self.eval_fraction = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "split_seed" => self.split_seed = parse(key, v)?,
            "wallclock" => self.wallclock = parse(key, v)?,
            "data" => self.data = PathBuf::from(v),
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::validation(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "mode" => self.mode.to_string(),
            "n" => self.n.to_string(),
            "k" => self.k.to_string(),
            "m" => self.m.to_string(),
            "m1" => self.m1.to_string(),
            "inner_steps" => self.inner_steps.to_string(),
            "delta" => self.delta.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "lambda" => self.lambda.to_string(),
            "tau" => self.tau.to_string(),
            "level" => level_name(self.level).to_string(),
            "meta_gradient" => mode_name(self.meta_gradient).to_string(),
            "meta_steps" => self.meta_steps.to_string(),
            "hidden" => self.hidden.to_string(),
            "projection" => self.projection.to_string(),
            "eval_way" => self.eval_way.to_string(),
            "eval_shot" => self.eval_shot.to_string(),
            "eval_query" => self.eval_query.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "eval_steps" => self.eval_steps.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "eval_fraction" => self.eval_fraction.to_string(),
            "seed" => self.seed.to_string(),
            "split_seed" => self.split_seed.to_string(),
            "wallclock" => self.wallclock.to_string(),
            "data" => self.data.display().to_string(),
            "out" => self.out.display().to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("line {}: expected key = value", i + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::validation(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    /// Every key in a fixed order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("known key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::validation(msg));
        self.task_params().validate()?;
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("tau", self.tau)] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if self.mode != RunMode::Scratch && self.inner_steps == 0 {
            return fail("inner_steps must be >= 1".into());
        }
        if self.mode == RunMode::Bmssl && self.delta == 0 {
            return fail("delta must be >= 1 for bmssl".into());
        }
        if self.hidden == 0 || self.projection == 0 {
            return fail("hidden and projection widths must be positive".into());
        }
        if self.eval_way == 0 || self.eval_shot == 0 || self.eval_query == 0 || self.eval_episodes == 0 {
            return fail("eval way, shot, query and episodes must be positive".into());
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return fail(format!("eval_fraction must lie in (0, 1), got {}", self.eval_fraction));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!((c.alpha, c.beta, c.inner_steps, c.delta), (0.05, 0.01, 5, 5));
        assert_eq!((c.tau, c.lambda, c.n, c.k, c.m, c.m1), (0.5, 1.0, 16, 4, 6, 3));
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::default();
        c.mode = RunMode::MetricOnly;
        c.alpha = 0.1 + 0.2;
        c.level = AugmentationLevel::A2;
        c.meta_gradient = MetaGradientMode::FirstOrder;
        c.data = PathBuf::from("some dir/d.bmsd");
        assert_eq!(RunConfig::parse_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse_text("# run\nmode = metassl\n\nbeta=0.5 # fast\nL = 3\n").unwrap();
        assert_eq!(c.mode, RunMode::MetaSsl);
        assert_eq!(c.beta, 0.5);
        assert_eq!(c.inner_steps, 3);
        assert_eq!(c.alpha, 0.05);
    }

    #[test]
    fn bad_input_rejected() {
        assert!(RunConfig::parse_text("alpha 0.1").is_err());
        assert!(RunConfig::parse_text("gamma = 1").is_err());
        assert!(RunConfig::parse_text("alpha = fast").is_err());
        assert!(RunConfig::parse_text("mode = teacher").is_err());
        for text in [
            "alpha = 0",
            "beta = -1",
            "tau = 0",
            "lambda = -0.5",
            "inner_steps = 0",
            "delta = 0",
            "n = 10",
            "m1 = 6",
            "eval_fraction = 1",
            "eval_way = 0",
        ] {
            let c = RunConfig::parse_text(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }

    #[test]
    fn mode_specific_rules() {
        let c = RunConfig::parse_text("mode = scratch\ninner_steps = 0").unwrap();
        c.validate().unwrap();
        let c = RunConfig::parse_text("mode = metassl\ndelta = 0").unwrap();
        c.validate().unwrap();
    }
}
