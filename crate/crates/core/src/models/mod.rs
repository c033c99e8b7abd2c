//! Differentiable classifiers with exact hand-written gradients.
//!
//! All models take inputs on the 0–255 pixel scale and apply the fixed map
//! `z = x / 255 - 0.5` internally, so input gradients are with respect to raw
//! pixels.

mod checkpoint;
mod conv;
mod dataset;
mod linear;
mod mlp;
mod train;

pub use checkpoint::{Checkpoint, Section, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use conv::TinyConv;
pub use dataset::{Example, LabeledDataset};
pub use linear::SoftmaxLinear;
pub use mlp::Mlp;
pub use train::{accuracy, train_classifier, TrainConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{argmax, cross_entropy, softmax, ImageShape, SeededRng};

pub(crate) const PIXEL_SCALE: f64 = 255.0;

#[inline]
pub(crate) fn standardize(x: f64) -> f64 {
    x / PIXEL_SCALE - 0.5
}

/// Anything that maps an input vector to logits and back-propagates the
/// cross-entropy loss to the input.
pub trait Classifier: Send + Sync {
    fn input_len(&self) -> usize;

    fn num_classes(&self) -> usize;

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>>;

    /// Cross-entropy loss together with its exact gradient w.r.t. `x`.
    fn loss_and_input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)>;

    fn cross_entropy_loss(&self, x: &[f64], y: usize) -> Result<f64> {
        check_label(y, self.num_classes())?;
        Ok(cross_entropy(&self.logits(x)?, y))
    }

    fn input_gradient(&self, x: &[f64], y: usize) -> Result<Vec<f64>> {
        Ok(self.loss_and_input_gradient(x, y)?.1)
    }

    /// Arg-max class, lowest index on ties.
    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

/// Models whose parameters live in one flat vector.
pub trait Trainable: Classifier {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Loss and gradient w.r.t. the flat parameter vector.
    fn loss_and_param_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)>;
}

pub(crate) fn check_label(y: usize, classes: usize) -> Result<()> {
    if y >= classes {
        return Err(Error::arg(format!("label {y} out of range for {classes} classes")));
    }
    Ok(())
}

pub(crate) fn check_input(x: &[f64], expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(Error::Shape {
            expected: vec![expected],
            actual: vec![x.len()],
        });
    }
    Ok(())
}

/// `softmax(logits) - e_y`, the loss gradient w.r.t. the logits.
pub(crate) fn logit_gradient(logits: &[f64], y: usize) -> Vec<f64> {
    let mut p = softmax(logits);
    p[y] -= 1.0;
    p
}

/// Glorot-uniform fill.
pub(crate) fn glorot(rng: &mut SeededRng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in out {
        *v = rng.uniform_range(-bound, bound);
    }
}

/// Architecture choice for a classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelSpec {
    SoftmaxLinear,
    /// One tanh hidden layer.
    Mlp { hidden: usize },
    /// conv3×3 → tanh → avg-pool 2×2 → conv3×3 → tanh → flatten → linear.
    TinyConv { filters1: usize, filters2: usize },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::SoftmaxLinear => "softmax-linear",
            ModelSpec::Mlp { .. } => "mlp-1-hidden",
            ModelSpec::TinyConv { .. } => "tiny-conv",
        }
    }
}

/// One of the three built-in architectures.
#[derive(Debug, Clone, PartialEq)]
pub enum DifferentiableModel {
    SoftmaxLinear(SoftmaxLinear),
    Mlp(Mlp),
    TinyConv(TinyConv),
}

impl DifferentiableModel {
    /// Randomly initialized model (Glorot weights, zero biases).
    pub fn init(
        spec: ModelSpec,
        image: ImageShape,
        num_classes: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::arg("a classifier needs at least two classes"));
        }
        Ok(match spec {
            ModelSpec::SoftmaxLinear => {
                Self::SoftmaxLinear(SoftmaxLinear::init(image.len(), num_classes, rng))
            }
            ModelSpec::Mlp { hidden } => {
                if hidden == 0 {
                    return Err(Error::arg("hidden width must be positive"));
                }
                Self::Mlp(Mlp::init(image.len(), hidden, num_classes, rng))
            }
            ModelSpec::TinyConv { filters1, filters2 } => {
                Self::TinyConv(TinyConv::init(image, filters1, filters2, num_classes, rng)?)
            }
        })
    }

    /// Model with every parameter set to zero.
    pub fn zeros(spec: ModelSpec, image: ImageShape, num_classes: usize) -> Result<Self> {
        let mut rng = SeededRng::new(0, 0);
        let mut m = Self::init(spec, image, num_classes, &mut rng)?;
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        Ok(m)
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Self::SoftmaxLinear(_) => ModelSpec::SoftmaxLinear,
            Self::Mlp(m) => ModelSpec::Mlp { hidden: m.hidden() },
            Self::TinyConv(m) => ModelSpec::TinyConv {
                filters1: m.filters1(),
                filters2: m.filters2(),
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        self.spec().name()
    }

    fn inner(&self) -> &dyn Trainable {
        match self {
            Self::SoftmaxLinear(m) => m,
            Self::Mlp(m) => m,
            Self::TinyConv(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Trainable {
        match self {
            Self::SoftmaxLinear(m) => m,
            Self::Mlp(m) => m,
            Self::TinyConv(m) => m,
        }
    }
}

impl Classifier for DifferentiableModel {
    fn input_len(&self) -> usize {
        self.inner().input_len()
    }

    fn num_classes(&self) -> usize {
        self.inner().num_classes()
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.inner().logits(x)
    }

    fn loss_and_input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.inner().loss_and_input_gradient(x, y)
    }
}

impl Trainable for DifferentiableModel {
    fn params(&self) -> &[f64] {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut [f64] {
        self.inner_mut().params_mut()
    }

    fn loss_and_param_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        self.inner().loss_and_param_gradient(x, y)
    }
}
