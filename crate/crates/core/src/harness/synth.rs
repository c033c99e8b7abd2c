//! Deterministic synthetic image datasets.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Example, LabeledDataset};
use crate::numerics::{ImageShape, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SynthKind {
    /// One random prototype image per class plus Gaussian pixel noise.
    Blobs {
        classes: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// The two-moons point cloud rendered through two fixed smooth
    /// patterns; not linearly separable.
    TwoMoonsImage {
        #[serde(default = "default_moon_noise")]
        noise: f64,
    },
    /// Sinusoidal stripes whose orientation encodes the class, with random
    /// phase, contrast and pixel noise.
    StripedDigits {
        classes: usize,
        #[serde(default = "default_stripe_noise")]
        noise: f64,
        /// Mean stripe amplitude; each image draws from `[0.75c, 1.25c]`.
        #[serde(default = "default_stripe_contrast")]
        contrast: f64,
    },
}

fn default_spread() -> f64 {
    20.0
}

fn default_moon_noise() -> f64 {
    0.1
}

fn default_stripe_noise() -> f64 {
    15.0
}

fn default_stripe_contrast() -> f64 {
    80.0
}

impl SynthKind {
    pub fn num_classes(&self) -> usize {
        match *self {
            SynthKind::Blobs { classes, .. } | SynthKind::StripedDigits { classes, .. } => classes,
            SynthKind::TwoMoonsImage { .. } => 2,
        }
    }
}

fn clamp_pixel(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

/// Smooth pattern in `[-1, 1]`: a sum of two random low-frequency waves.
fn smooth_pattern(shape: ImageShape, rng: &mut SeededRng) -> Vec<f64> {
    let waves: Vec<(f64, f64, f64)> = (0..2)
        .map(|_| (rng.uniform_range(0.5, 1.5), rng.uniform_range(0.0, PI), rng.uniform_range(0.0, 2.0 * PI)))
        .collect();
    let mut out = vec![0.0; shape.len()];
    for r in 0..shape.height {
        for c in 0..shape.width {
            let (u, v) = (r as f64 / shape.height as f64, c as f64 / shape.width as f64);
            let val: f64 = waves
                .iter()
                .map(|(f, th, ph)| (2.0 * PI * f * (u * th.cos() + v * th.sin()) + ph).sin())
                .sum::<f64>()
                / 2.0;
            for ch in 0..shape.channels {
                out[shape.index(r, c, ch)] = val;
            }
        }
    }
    out
}

/// `n` labeled images, labels `i mod classes` in shuffled order.
pub fn synth_dataset(kind: SynthKind, n: usize, shape: ImageShape, seed: u64) -> Result<LabeledDataset> {
    if n < 2 {
        return Err(Error::arg("synthetic datasets need n ≥ 2"));
    }
    let classes = kind.num_classes();
    if classes < 2 {
        return Err(Error::arg("synthetic datasets need at least two classes"));
    }
    let mut rng = SeededRng::new(seed, 0);
    let mut examples: Vec<Example> = match kind {
        SynthKind::Blobs { spread, .. } => {
            let centers: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..shape.len()).map(|_| rng.uniform_range(40.0, 215.0)).collect())
                .collect();
            (0..n)
                .map(|i| {
                    let y = i % classes;
                    Example {
                        pixels: centers[y].iter().map(|c| clamp_pixel(c + spread * rng.normal())).collect(),
                        label: y,
                    }
                })
                .collect()
        }
        SynthKind::TwoMoonsImage { noise } => {
            let p1 = smooth_pattern(shape, &mut rng);
            let p2 = smooth_pattern(shape, &mut rng);
            (0..n)
                .map(|i| {
                    let y = i % 2;
                    let t = rng.uniform_range(0.0, PI);
                    let (mut u, mut v) = if y == 0 { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
                    u += noise * rng.normal() - 0.5;
                    v += noise * rng.normal() - 0.25;
                    let pixels = p1
                        .iter()
                        .zip(&p2)
                        .map(|(a, b)| clamp_pixel(127.5 + 60.0 * (u * a + v * b)))
                        .collect();
                    Example { pixels, label: y }
                })
                .collect()
        }
        SynthKind::StripedDigits { noise, contrast, .. } => (0..n)
            .map(|i| {
                let y = i % classes;
                let theta = PI * y as f64 / classes as f64;
                let phase = rng.uniform_range(0.0, 2.0 * PI);
                let contrast = rng.uniform_range(0.75 * contrast, 1.25 * contrast);
                let freq = 1.0;
                let mut pixels = vec![0.0; shape.len()];
                for r in 0..shape.height {
                    for c in 0..shape.width {
                        let s = (r as f64 * theta.cos() + c as f64 * theta.sin()) / shape.height as f64;
                        let base = 127.5 + contrast * (2.0 * PI * freq * s + phase).sin();
                        for ch in 0..shape.channels {
                            pixels[shape.index(r, c, ch)] = clamp_pixel(base + noise * rng.normal());
                        }
                    }
                }
                Example { pixels, label: y }
            })
            .collect(),
    };
    rng.shuffle(&mut examples);
    LabeledDataset::new(examples, shape, classes)
}
