use bmssl_core::augment::{apply_pipeline, sample_pipeline};
use bmssl_core::bilevel::{meta_step_bootstrapped, meta_step_standard, MetaGradientMode, QuadraticObjective};
use bmssl_core::config::parse_level;
use bmssl_core::{harness, rng, synth, Tensor};
use wasm_bindgen::prelude::*;

/// Row-major images of equal size, the source first.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Gallery {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    descriptions: Vec<String>,
}

#[wasm_bindgen]
impl Gallery {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn count(&self) -> usize {
        self.descriptions.len()
    }

    pub fn pixels(&self) -> Vec<f64> {
        self.pixels.clone()
    }

    /// One line per image naming the transforms applied.
    pub fn descriptions(&self) -> String {
        self.descriptions.join("\n")
    }
}

pub fn augment_gallery(class: u32, level: &str, count: usize, seed: u64) -> Result<Gallery, String> {
    let level = parse_level(level).map_err(|e| e.to_string())?;
    let ds = synth::generate(harness::DEFAULT_CLASSES, 2, seed).map_err(|e| e.to_string())?;
    let idx = ds
        .latent_class
        .iter()
        .position(|&c| c == Some(class))
        .ok_or_else(|| format!("class must be below {}", harness::DEFAULT_CLASSES))?;
    let source = &ds.images[idx];
    let mut gallery = Gallery {
        width: source.width(),
        height: source.height(),
        pixels: source.pixels().to_vec(),
        descriptions: vec!["source".into()],
    };
    for i in 0..count as u64 {
        let specs = sample_pipeline(level, rng::derive(seed, &[i, 0]));
        let view = apply_pipeline(source, &specs, rng::derive(seed, &[i, 1])).map_err(|e| e.to_string())?;
        gallery.pixels.extend_from_slice(view.pixels());
        gallery
            .descriptions
            .push(specs.iter().map(|s| format!("{:?}", s.op)).collect::<Vec<_>>().join(" + "));
    }
    Ok(gallery)
}

#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigen_gap: f64,
    random_gaps: Vec<f64>,
    optimal: bool,
    degenerate: bool,
}

#[wasm_bindgen]
impl Spectrum {
    /// Transition-matrix eigenvalues, descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigenvalues.clone()
    }

    pub fn eigen_gap(&self) -> f64 {
        self.eigen_gap
    }

    pub fn random_gaps(&self) -> Vec<f64> {
        self.random_gaps.clone()
    }

    /// No random subspace beat the eigen-subspace by more than 1e-9.
    pub fn optimal(&self) -> bool {
        self.optimal
    }

    /// Eigenvalue `d` ties eigenvalue `d + 1`, so the top-`d` subspace is not unique.
    pub fn degenerate(&self) -> bool {
        self.degenerate
    }
}

pub fn chain_spectrum(views: usize, sources: usize, d: usize, samples: usize, seed: u64) -> Result<Spectrum, String> {
    if views > 64 || samples > 100_000 {
        return Err("at most 64 views and 100000 samples".into());
    }
    let demo = harness::spectral_demo(views, sources, d, samples, seed).map_err(|e| e.to_string())?;
    Ok(Spectrum {
        optimal: demo.report.eigen_is_optimal(1e-9),
        eigen_gap: demo.report.eigen_gap,
        random_gaps: demo.report.random_gaps,
        eigenvalues: demo.eigenvalues,
        degenerate: demo.degenerate_split,
    })
}

/// Parameter paths of both meta-learners, `meta_steps + 1` points each.
#[wasm_bindgen]
#[derive(Clone, Debug, PartialEq)]
pub struct MetaPaths {
    standard: Vec<f64>,
    bootstrapped: Vec<f64>,
    kl: Vec<f64>,
}

#[wasm_bindgen]
impl MetaPaths {
    pub fn standard(&self) -> Vec<f64> {
        self.standard.clone()
    }

    pub fn bootstrapped(&self) -> Vec<f64> {
        self.bootstrapped.clone()
    }

    /// KL to the bootstrap target before each bootstrapped step.
    pub fn kl(&self) -> Vec<f64> {
        self.kl.clone()
    }
}

pub fn quadratic_meta_paths(
    theta: f64,
    center: f64,
    alpha: f64,
    beta: f64,
    steps: usize,
    delta: usize,
    meta_steps: usize,
) -> Result<MetaPaths, String> {
    if meta_steps > 10_000 || steps + delta > 1_000 {
        return Err("at most 10000 meta steps and 1000 inner steps".into());
    }
    let obj = [QuadraticObjective::new(center)];
    let scalar = |v: f64| vec![Tensor::scalar(v)];
    let mut paths = MetaPaths {
        standard: vec![theta],
        bootstrapped: vec![theta],
        kl: Vec::with_capacity(meta_steps),
    };
    let (mut s, mut b) = (theta, theta);
    for _ in 0..meta_steps {
        let std_step = meta_step_standard(&obj, &scalar(s), steps, alpha, beta, MetaGradientMode::Exact)
            .map_err(|e| e.to_string())?;
        let boot_step = meta_step_bootstrapped(&obj, &scalar(b), steps, delta, alpha, beta).map_err(|e| e.to_string())?;
        s = std_step.theta_after[0].data()[0];
        b = boot_step.theta_after[0].data()[0];
        paths.standard.push(s);
        paths.bootstrapped.push(b);
        paths.kl.push(boot_step.kl_value.unwrap_or_default());
    }
    Ok(paths)
}
