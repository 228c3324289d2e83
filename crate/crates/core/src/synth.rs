//! Deterministic synthetic image datasets.
//!
//! Each latent class is a parametric 16x16 pattern (bar, ring, checker, dark blob,
//! corner gradient, two dots, cross, stripes). Classes beyond the first eight
//! reuse the families with different parameters. Samples get position,
//! amplitude and pixel-noise jitter.
//!
//! File layout (little-endian): magic `BMSD`, u32 version, u32 image count,
//! u16 width, u16 height, u16 channels, then per image an i32 latent class
//! (-1 when stripped) followed by `width * height * channels` f32 pixels.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng;

pub const SIDE: usize = 16;
pub const FAMILY_COUNT: usize = 8;
const MAGIC: &[u8; 4] = b"BMSD";
const VERSION: u32 = 1;

pub const POSITION_JITTER: f64 = 2.0;
pub const AMPLITUDE_JITTER: f64 = 0.2;
pub const PIXEL_NOISE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub images: Vec<Image>,
    /// Latent class per image; `None` once stripped for unsupervised use.
    pub latent_class: Vec<Option<u32>>,
    pub class_count: usize,
    pub per_class: usize,
    pub seed: u64,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Distinct latent classes present, ascending.
    pub fn classes(&self) -> Vec<u32> {
        let mut c: Vec<u32> = self.latent_class.iter().flatten().copied().collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Indices of images with latent class `class`, in dataset order.
    pub fn indices_of(&self, class: u32) -> Vec<usize> {
        self.latent_class
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == Some(class))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.latent_class == other.latent_class
            && self.images.len() == other.images.len()
            && self
                .images
                .iter()
                .zip(&other.images)
                .all(|(a, b)| a.bitwise_eq(b))
    }
}

#[derive(Clone, Copy, Debug)]
enum Pattern {
    Bar { angle: f64 },
    Ring { radius: f64 },
    Checker { period: f64 },
    Blob { sigma: f64 },
    CornerGradient { corner: u8 },
    TwoDot { angle: f64 },
    Cross { angle: f64, half_width: f64 },
    Stripe { angle: f64, period: f64 },
}

fn pattern_for(class: usize) -> Pattern {
    let family = class % FAMILY_COUNT;
    let variant = class / FAMILY_COUNT;
    let v = variant % 4;
    // Past 32 classes the tables repeat with a rotation offset.
    let offset = (variant / 4) as f64 * PI / 12.0;
    let deg = |d: f64| d * PI / 180.0 + offset;
    match family {
        0 => Pattern::Bar {
            angle: deg([0.0, 90.0, 30.0, 120.0][v]),
        },
        1 => Pattern::Ring {
            radius: [5.5, 4.0, 7.0, 3.0][v] - offset,
        },
        2 => Pattern::Checker {
            period: [4.0, 2.0, 8.0, 3.0][v] + offset,
        },
        3 => Pattern::Blob {
            sigma: [3.5, 1.5, 5.0, 2.5][v] + offset,
        },
        4 => Pattern::CornerGradient {
            corner: [0, 2, 1, 3][v],
        },
        5 => Pattern::TwoDot {
            angle: deg([45.0, 135.0, 75.0, 165.0][v]),
        },
        6 => {
            let (a, hw) = [(0.0, 1.6), (45.0, 1.6), (0.0, 2.4), (45.0, 2.4)][v];
            Pattern::Cross {
                angle: deg(a),
                half_width: hw,
            }
        }
        _ => {
            let (a, p) = [(0.0, 4.0), (90.0, 4.0), (45.0, 3.0), (135.0, 6.0)][v];
            Pattern::Stripe {
                angle: deg(a),
                period: p,
            }
        }
    }
}

fn gauss(d2: f64, sigma: f64) -> f64 {
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Clean intensity of `pattern` at pixel `(x, y)` with the pattern centered
/// at `(x - dx, y - dy)`. Periodic patterns keep their phase on the pixel grid
/// and move only through a soft window.
fn intensity(pattern: Pattern, x: f64, y: f64, dx: f64, dy: f64) -> f64 {
    let rho2 = dx * dx + dy * dy;
    let window = || gauss(rho2, 5.0);
    match pattern {
        Pattern::Bar { angle } => {
            let (s, c) = angle.sin_cos();
            let along = dx * c + dy * s;
            let across = -dx * s + dy * c;
            if along.abs() <= 6.0 {
                gauss(across * across, 1.2)
            } else {
                0.0
            }
        }
        Pattern::Ring { radius } => {
            let d = rho2.sqrt() - radius;
            gauss(d * d, 1.0)
        }
        Pattern::Checker { period } => {
            let cx = (x / period).floor() as i64;
            let cy = (y / period).floor() as i64;
            let on = if (cx + cy).rem_euclid(2) == 0 { 1.0 } else { 0.0 };
            on * window()
        }
        Pattern::Blob { sigma } => 1.0 - gauss(rho2, sigma),
        Pattern::CornerGradient { corner } => {
            let (sx, sy) = match corner {
                0 => (1.0, 1.0),
                1 => (-1.0, 1.0),
                2 => (-1.0, -1.0),
                _ => (1.0, -1.0),
            };
            (0.5 + (sx * dx + sy * dy) / 20.0).clamp(0.0, 1.0)
        }
        Pattern::TwoDot { angle } => {
            let (s, c) = angle.sin_cos();
            let (ox, oy) = (3.5 * c, 3.5 * s);
            let d1 = (dx - ox).powi(2) + (dy - oy).powi(2);
            let d2 = (dx + ox).powi(2) + (dy + oy).powi(2);
            gauss(d1, 1.1) + gauss(d2, 1.1)
        }
        Pattern::Cross { angle, half_width } => {
            let (s, c) = angle.sin_cos();
            let u = dx * c + dy * s;
            let v = -dx * s + dy * c;
            let arm = |t: f64| if t.abs() <= 7.5 { 1.0 } else { 0.0 };
            let h = arm(u) * gauss(v * v, half_width);
            let w = arm(v) * gauss(u * u, half_width);
            h.max(w)
        }
        Pattern::Stripe { angle, period } => {
            let (s, c) = angle.sin_cos();
            let wave = 0.5 + 0.5 * (2.0 * PI * (x * c + y * s) / period).sin();
            wave * window()
        }
    }
}

/// Renders one jittered sample. Pixels are rounded to `f32` precision so the
/// on-disk format is lossless.
fn render(class: usize, seed: u64) -> Image {
    let mut rng = rng::seeded(seed);
    let pattern = pattern_for(class);
    let cx = (SIDE as f64 - 1.0) / 2.0 + rng.random_range(-POSITION_JITTER..=POSITION_JITTER);
    let cy = (SIDE as f64 - 1.0) / 2.0 + rng.random_range(-POSITION_JITTER..=POSITION_JITTER);
    let amp = 1.0 + rng.random_range(-AMPLITUDE_JITTER..=AMPLITUDE_JITTER);
    let mut px = Vec::with_capacity(SIDE * SIDE);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let (fx, fy) = (x as f64, y as f64);
            let clean = intensity(pattern, fx, fy, fx - cx, fy - cy);
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = (amp * clean + PIXEL_NOISE * z).clamp(0.0, 1.0);
            px.push(v as f32 as f64);
        }
    }
    Image::from_clamped(SIDE, SIDE, px)
}

/// Generates `class_count * per_class` images, grouped by class.
pub fn generate(class_count: usize, per_class: usize, seed: u64) -> Result<SyntheticDataset> {
    if class_count < 2 || per_class < 2 {
        return Err(Error::validation(format!(
            "need at least 2 classes and 2 samples per class, got {class_count} x {per_class}"
        )));
    }
    let mut images = Vec::with_capacity(class_count * per_class);
    let mut latent_class = Vec::with_capacity(class_count * per_class);
    for c in 0..class_count {
        for i in 0..per_class {
            images.push(render(c, rng::derive(seed, &[c as u64, i as u64])));
            latent_class.push(Some(c as u32));
        }
    }
    Ok(SyntheticDataset {
        images,
        latent_class,
        class_count,
        per_class,
        seed,
    })
}

/// Class-disjoint split. The training side has its labels stripped.
pub fn split(
    dataset: &SyntheticDataset,
    train_fraction_of_classes: f64,
    seed: u64,
) -> Result<(SyntheticDataset, SyntheticDataset)> {
    let mut classes = dataset.classes();
    let n = classes.len();
    let n_train = (train_fraction_of_classes * n as f64).round() as usize;
    if n_train < 2 || n.saturating_sub(n_train) < 2 {
        return Err(Error::validation(format!(
            "split of {n} classes at fraction {train_fraction_of_classes} leaves fewer than 2 on a side"
        )));
    }
    classes.shuffle(&mut rng::seeded(seed));
    let train_classes = &classes[..n_train];

    let mut train = SyntheticDataset {
        images: Vec::new(),
        latent_class: Vec::new(),
        class_count: n_train,
        per_class: dataset.per_class,
        seed: dataset.seed,
    };
    let mut eval = SyntheticDataset {
        images: Vec::new(),
        latent_class: Vec::new(),
        class_count: n - n_train,
        per_class: dataset.per_class,
        seed: dataset.seed,
    };
    for (img, c) in dataset.images.iter().zip(&dataset.latent_class) {
        let Some(c) = c else {
            return Err(Error::validation("cannot split a dataset with stripped labels"));
        };
        if train_classes.contains(c) {
            train.images.push(img.clone());
            train.latent_class.push(None);
        } else {
            eval.images.push(img.clone());
            eval.latent_class.push(Some(*c));
        }
    }
    Ok((train, eval))
}

/// Leave-one-out nearest-centroid accuracy on the latent labels.
pub fn nearest_centroid_loo_accuracy(dataset: &SyntheticDataset) -> f64 {
    let classes = dataset.classes();
    let dim = dataset.images[0].pixels().len();
    let mut sums = vec![vec![0.0; dim]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    let slot = |c: u32| classes.binary_search(&c).expect("known class");
    for (img, c) in dataset.images.iter().zip(&dataset.latent_class) {
        let k = slot(c.expect("labeled"));
        counts[k] += 1;
        for (s, p) in sums[k].iter_mut().zip(img.pixels()) {
            *s += p;
        }
    }
    let mut correct = 0;
    for (img, c) in dataset.images.iter().zip(&dataset.latent_class) {
        let own = slot(c.expect("labeled"));
        let mut best = (f64::INFINITY, usize::MAX);
        for k in 0..classes.len() {
            let (n, exclude) = if k == own {
                (counts[k] - 1, true)
            } else {
                (counts[k], false)
            };
            if n == 0 {
                continue;
            }
            let d: f64 = sums[k]
                .iter()
                .zip(img.pixels())
                .map(|(s, p)| {
                    let centroid = if exclude { (s - p) / n as f64 } else { s / n as f64 };
                    (centroid - p).powi(2)
                })
                .sum();
            if d < best.0 {
                best = (d, k);
            }
        }
        if best.1 == own {
            correct += 1;
        }
    }
    correct as f64 / dataset.len() as f64
}

pub fn write<W: Write>(dataset: &SyntheticDataset, mut w: W) -> std::io::Result<()> {
    let (width, height) = dataset
        .images
        .first()
        .map_or((0, 0), |i| (i.width(), i.height()));
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dataset.images.len() as u32).to_le_bytes())?;
    w.write_all(&(width as u16).to_le_bytes())?;
    w.write_all(&(height as u16).to_le_bytes())?;
    w.write_all(&(Image::CHANNELS as u16).to_le_bytes())?;
    for (img, c) in dataset.images.iter().zip(&dataset.latent_class) {
        let label: i32 = c.map_or(-1, |c| c as i32);
        w.write_all(&label.to_le_bytes())?;
        for &p in img.pixels() {
            w.write_all(&(p as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "dataset file",
        reason: reason.into(),
    }
}

pub fn read<R: Read>(mut r: R) -> Result<SyntheticDataset> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| format_err(e.to_string()))?;
    let mut cur = crate::checkpoint::Cursor::new(&buf, "dataset file");
    if cur.take(4)? != MAGIC {
        return Err(format_err("bad magic"));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(format_err(format!("unsupported version {version}")));
    }
    let count = cur.u32()? as usize;
    let width = cur.u16()? as usize;
    let height = cur.u16()? as usize;
    let channels = cur.u16()? as usize;
    if channels != Image::CHANNELS {
        return Err(format_err(format!("expected 1 channel, got {channels}")));
    }
    let mut images = Vec::with_capacity(count);
    let mut latent_class = Vec::with_capacity(count);
    for _ in 0..count {
        let label = cur.i32()?;
        latent_class.push(if label < 0 { None } else { Some(label as u32) });
        let px = (0..width * height)
            .map(|_| cur.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        images.push(Image::new(width, height, px)?);
    }
    if !cur.is_empty() {
        return Err(format_err("trailing bytes"));
    }
    let mut ds = SyntheticDataset {
        images,
        latent_class,
        class_count: 0,
        per_class: 0,
        seed: 0,
    };
    ds.class_count = ds.classes().len();
    ds.per_class = ds.len().checked_div(ds.class_count).unwrap_or(0);
    Ok(ds)
}

pub fn save(dataset: &SyntheticDataset, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write(dataset, &mut bytes).expect("writing to a Vec cannot fail");
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<SyntheticDataset> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read(std::io::BufReader::new(f))
}
