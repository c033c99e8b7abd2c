use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ImageShape;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    /// Pixels on the 0–255 scale, `ImageShape` layout.
    pub pixels: Vec<f64>,
    pub label: usize,
}

/// Labeled images sharing one shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    examples: Vec<Example>,
    image_shape: ImageShape,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(examples: Vec<Example>, image_shape: ImageShape, num_classes: usize) -> Result<Self> {
        for (i, ex) in examples.iter().enumerate() {
            if ex.label >= num_classes {
                return Err(Error::arg(format!(
                    "example {i}: label {} out of range for {num_classes} classes",
                    ex.label
                )));
            }
            if ex.pixels.len() != image_shape.len() {
                return Err(Error::Shape {
                    expected: image_shape.dims(),
                    actual: vec![ex.pixels.len()],
                });
            }
            if let Some(p) = ex.pixels.iter().find(|p| !(0.0..=255.0).contains(*p)) {
                return Err(Error::arg(format!("example {i}: pixel {p} outside [0, 255]")));
            }
        }
        Ok(Self {
            examples,
            image_shape,
            num_classes,
        })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn image_shape(&self) -> ImageShape {
        self.image_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// First `n` examples and the rest.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.examples.len());
        let mk = |ex: &[Example]| Self {
            examples: ex.to_vec(),
            image_shape: self.image_shape,
            num_classes: self.num_classes,
        };
        (mk(&self.examples[..n]), mk(&self.examples[n..]))
    }

    pub fn take(&self, n: usize) -> Self {
        self.split_at(n).0
    }
}
