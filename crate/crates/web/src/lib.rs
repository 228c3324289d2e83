//! WebAssembly bindings for the browser demo. Each export wraps a plain Rust
//! function of the same name in [`ops`], which is what the native tests call.

use wasm_bindgen::prelude::*;

pub mod ops;

pub use ops::{Gallery, MetaPaths, Spectrum};

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// Source image of latent class `class` followed by `count` augmented views.
#[wasm_bindgen]
pub fn augment_gallery(class: u32, level: &str, count: usize, seed: u64) -> Result<Gallery, JsError> {
    ops::augment_gallery(class, level, count, seed).map_err(js)
}

/// Spectrum and minimax gaps of a random positive-pair chain.
#[wasm_bindgen]
pub fn chain_spectrum(views: usize, sources: usize, d: usize, samples: usize, seed: u64) -> Result<Spectrum, JsError> {
    ops::chain_spectrum(views, sources, d, samples, seed).map_err(js)
}

/// Standard and bootstrapped meta-training on `(w - c)^2 / 2` from `theta`.
#[wasm_bindgen]
pub fn quadratic_meta_paths(
    theta: f64,
    center: f64,
    alpha: f64,
    beta: f64,
    steps: usize,
    delta: usize,
    meta_steps: usize,
) -> Result<MetaPaths, JsError> {
    ops::quadratic_meta_paths(theta, center, alpha, beta, steps, delta, meta_steps).map_err(js)
}
