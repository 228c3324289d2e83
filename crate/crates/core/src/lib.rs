//! Bootstrapped meta self-supervised learning at desk scale.
//!
//! Unlabeled images become pseudo-labeled few-shot episodes through seeded
//! augmentation ([`taskgen`]). A small tanh network is adapted to each episode
//! with a cross-entropy plus contrastive loss ([`model`]), and the shared
//! initialization is meta-trained either through the query loss or by matching
//! a bootstrapped target's predictions ([`bilevel`]). All gradients, including
//! the second-order ones, come from the reverse-mode engine in [`autodiff`].

pub mod augment;
pub mod autodiff;
pub mod bilevel;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod image;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod taskgen;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
