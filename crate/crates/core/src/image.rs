//! Single-channel images with pixels in `[0, 1]`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub const CHANNELS: usize = 1;

    /// Builds an image, clamping pixels into `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::validation(format!("image size {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::validation(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| p.is_nan()) {
            return Err(Error::NonFinite("NaN pixel".into()));
        }
        Ok(Self::from_clamped(width, height, pixels))
    }

    pub(crate) fn from_clamped(width: usize, height: usize, mut pixels: Vec<f64>) -> Self {
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self
                .pixels
                .iter()
                .zip(&other.pixels)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}
