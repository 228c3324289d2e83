//! Seeded augmentation primitives and the four ablation levels.
//!
//! Every transform preserves the image size and keeps pixels in `[0, 1]`.
//! Randomness inside a transform (crop offset, noise, cutout position) comes
//! only from the seed passed to [`apply`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Intensity {
    Mild,
    Strong,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AugmentKind {
    CropResize,
    HorizontalFlip,
    Rotate90,
    GaussianNoise,
    BrightnessScale,
    Cutout,
}

impl AugmentKind {
    pub const ALL: [AugmentKind; 6] = [
        AugmentKind::CropResize,
        AugmentKind::HorizontalFlip,
        AugmentKind::Rotate90,
        AugmentKind::GaussianNoise,
        AugmentKind::BrightnessScale,
        AugmentKind::Cutout,
    ];
}

/// A concrete transform with its parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    /// Crop a window of `fraction` of each side, resize back (nearest neighbor).
    CropResize { fraction: f64 },
    HorizontalFlip,
    /// Clockwise quarter turns, 1..=3. Square images only.
    Rotate90 { quarter_turns: u8 },
    GaussianNoise { sigma: f64 },
    BrightnessScale { factor: f64 },
    /// Fill a square covering `area` of the image with the image mean.
    Cutout { area: f64 },
}

impl Augmentation {
    pub fn kind(&self) -> AugmentKind {
        match self {
            Augmentation::CropResize { .. } => AugmentKind::CropResize,
            Augmentation::HorizontalFlip => AugmentKind::HorizontalFlip,
            Augmentation::Rotate90 { .. } => AugmentKind::Rotate90,
            Augmentation::GaussianNoise { .. } => AugmentKind::GaussianNoise,
            Augmentation::BrightnessScale { .. } => AugmentKind::BrightnessScale,
            Augmentation::Cutout { .. } => AugmentKind::Cutout,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationSpec {
    pub op: Augmentation,
    pub intensity: Intensity,
}

impl AugmentationSpec {
    pub fn new(op: Augmentation, intensity: Intensity) -> Result<Self> {
        let spec = Self { op, intensity };
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> AugmentKind {
        self.op.kind()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::validation(format!("{what}: {:?}", self.op)));
        match self.op {
            Augmentation::CropResize { fraction } => {
                let lo = match self.intensity {
                    Intensity::Mild => 0.8,
                    Intensity::Strong => 0.5,
                };
                if !(lo..=1.0).contains(&fraction) {
                    return bad("crop fraction out of range");
                }
            }
            Augmentation::HorizontalFlip => {}
            Augmentation::Rotate90 { quarter_turns } => {
                if !(1..=3).contains(&quarter_turns) {
                    return bad("quarter turns must be 1..=3");
                }
            }
            Augmentation::GaussianNoise { sigma } => {
                if !(0.0..=0.25).contains(&sigma) {
                    return bad("noise sigma out of [0, 0.25]");
                }
            }
            Augmentation::BrightnessScale { factor } => {
                if !(0.6..=1.4).contains(&factor) {
                    return bad("brightness factor out of [0.6, 1.4]");
                }
            }
            Augmentation::Cutout { area } => {
                if !(area > 0.0 && area <= 0.4) {
                    return bad("cutout area out of (0, 0.4]");
                }
            }
        }
        Ok(())
    }
}

/// Applies one transform. Output depends only on `(image, spec, seed)`.
pub fn apply(image: &Image, spec: &AugmentationSpec, seed: u64) -> Result<Image> {
    spec.validate()?;
    let (w, h) = (image.width(), image.height());
    let src = image.pixels();
    let mut rng = rng::seeded(seed);
    let pixels = match spec.op {
        Augmentation::CropResize { fraction } => {
            let cw = ((fraction * w as f64).round() as usize).clamp(1, w);
            let ch = ((fraction * h as f64).round() as usize).clamp(1, h);
            let ox = rng.random_range(0..=w - cw);
            let oy = rng.random_range(0..=h - ch);
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                let sy = oy + y * ch / h;
                for x in 0..w {
                    let sx = ox + x * cw / w;
                    out.push(src[sy * w + sx]);
                }
            }
            out
        }
        Augmentation::HorizontalFlip => {
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    out.push(src[y * w + (w - 1 - x)]);
                }
            }
            out
        }
        Augmentation::Rotate90 { quarter_turns } => {
            if w != h {
                return Err(Error::validation(format!(
                    "rotate90 needs a square image, got {w}x{h}"
                )));
            }
            let n = w;
            let mut cur = src.to_vec();
            for _ in 0..quarter_turns {
                let mut next = vec![0.0; n * n];
                for y in 0..n {
                    for x in 0..n {
                        next[y * n + x] = cur[(n - 1 - x) * n + y];
                    }
                }
                cur = next;
            }
            cur
        }
        Augmentation::GaussianNoise { sigma } => src
            .iter()
            .map(|&p| {
                let z: f64 = StandardNormal.sample(&mut rng);
                p + sigma * z
            })
            .collect(),
        Augmentation::BrightnessScale { factor } => src.iter().map(|&p| p * factor).collect(),
        Augmentation::Cutout { area } => {
            let side_w = ((area.sqrt() * w as f64).round() as usize).clamp(1, w);
            let side_h = ((area.sqrt() * h as f64).round() as usize).clamp(1, h);
            let ox = rng.random_range(0..=w - side_w);
            let oy = rng.random_range(0..=h - side_h);
            let fill = src.iter().sum::<f64>() / src.len() as f64;
            let mut out = src.to_vec();
            for y in oy..oy + side_h {
                for x in ox..ox + side_w {
                    out[y * w + x] = fill;
                }
            }
            out
        }
    };
    Ok(Image::from_clamped(w, h, pixels))
}

/// Applies a pipeline in order; stage `i` uses a seed derived from `(seed, i)`.
pub fn apply_pipeline(image: &Image, specs: &[AugmentationSpec], seed: u64) -> Result<Image> {
    let mut out = image.clone();
    for (i, spec) in specs.iter().enumerate() {
        out = apply(&out, spec, rng::derive(seed, &[i as u64]))?;
    }
    Ok(out)
}

/// Ablation levels: one kind or five kinds, mild or strong.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentationLevel {
    A1,
    A2,
    A3,
    A4,
}

/// The single kind used by A1/A2.
pub const SINGLE_KIND: [AugmentKind; 1] = [AugmentKind::CropResize];

/// The five kinds used by A3/A4. Rotation is left out: several synthetic
/// classes differ only by orientation.
pub const FIVE_KINDS: [AugmentKind; 5] = [
    AugmentKind::CropResize,
    AugmentKind::HorizontalFlip,
    AugmentKind::GaussianNoise,
    AugmentKind::BrightnessScale,
    AugmentKind::Cutout,
];

impl AugmentationLevel {
    pub const ALL: [AugmentationLevel; 4] = [
        AugmentationLevel::A1,
        AugmentationLevel::A2,
        AugmentationLevel::A3,
        AugmentationLevel::A4,
    ];

    pub fn kinds(self) -> &'static [AugmentKind] {
        match self {
            AugmentationLevel::A1 | AugmentationLevel::A2 => &SINGLE_KIND,
            AugmentationLevel::A3 | AugmentationLevel::A4 => &FIVE_KINDS,
        }
    }

    pub fn intensity(self) -> Intensity {
        match self {
            AugmentationLevel::A1 | AugmentationLevel::A3 => Intensity::Mild,
            AugmentationLevel::A2 | AugmentationLevel::A4 => Intensity::Strong,
        }
    }
}

impl fmt::Display for AugmentationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AugmentationLevel::A1 => "A1",
            AugmentationLevel::A2 => "A2",
            AugmentationLevel::A3 => "A3",
            AugmentationLevel::A4 => "A4",
        };
        f.write_str(s)
    }
}

impl FromStr for AugmentationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "A1" => Ok(AugmentationLevel::A1),
            "A2" => Ok(AugmentationLevel::A2),
            "A3" => Ok(AugmentationLevel::A3),
            "A4" => Ok(AugmentationLevel::A4),
            _ => Err(Error::validation(format!("unknown augmentation level '{s}'"))),
        }
    }
}

fn sample_spec(kind: AugmentKind, intensity: Intensity, rng: &mut impl Rng) -> AugmentationSpec {
    let mild = intensity == Intensity::Mild;
    let op = match kind {
        AugmentKind::CropResize => Augmentation::CropResize {
            fraction: if mild {
                rng.random_range(0.8..=1.0)
            } else {
                rng.random_range(0.5..0.8)
            },
        },
        AugmentKind::HorizontalFlip => Augmentation::HorizontalFlip,
        AugmentKind::Rotate90 => Augmentation::Rotate90 {
            quarter_turns: rng.random_range(1..=3),
        },
        AugmentKind::GaussianNoise => Augmentation::GaussianNoise {
            sigma: if mild {
                rng.random_range(0.0..=0.05)
            } else {
                rng.random_range(0.1..=0.25)
            },
        },
        AugmentKind::BrightnessScale => Augmentation::BrightnessScale {
            factor: if mild {
                rng.random_range(0.85..=1.15)
            } else if rng.random_bool(0.5) {
                rng.random_range(0.6..0.85)
            } else {
                rng.random_range(1.15..=1.4)
            },
        },
        AugmentKind::Cutout => Augmentation::Cutout {
            area: if mild {
                rng.random_range(0.05..=0.15)
            } else {
                rng.random_range(0.2..=0.4)
            },
        },
    };
    AugmentationSpec { op, intensity }
}

/// Draws a pipeline of 1 to 3 transforms from the level's kinds, at the
/// level's intensity.
pub fn sample_pipeline(level: AugmentationLevel, seed: u64) -> Vec<AugmentationSpec> {
    let mut rng = rng::seeded(seed);
    let kinds = level.kinds();
    let count = rng.random_range(1..=3);
    (0..count)
        .map(|_| {
            let kind = kinds[rng.random_range(0..kinds.len())];
            sample_spec(kind, level.intensity(), &mut rng)
        })
        .collect()
}
