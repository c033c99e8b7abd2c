//! Versioned JSON container for model and generator parameters.
//!
//! ```json
//! {
//!   "format": "apaa-checkpoint",
//!   "version": 1,
//!   "kind": "classifier",
//!   "header": { "model": {"kind": "mlp", "hidden": 32}, "inputs": 64, "num_classes": 4 },
//!   "sections": [ { "name": "w1", "shape": [32, 64], "data": [...] }, ... ]
//! }
//! ```
//!
//! Sections are stored in parameter order; loading concatenates them and
//! checks each name and shape against the architecture in the header. Floats
//! are written with shortest round-trip formatting, so save/load is
//! bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DifferentiableModel, Mlp, ModelSpec, SoftmaxLinear, TinyConv, Trainable, Classifier};
use crate::error::{Error, Result};
use crate::numerics::ImageShape;

pub const CHECKPOINT_FORMAT: &str = "apaa-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub header: serde_json::Value,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn new(kind: &str, header: serde_json::Value, sections: Vec<Section>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            header,
            sections,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing {
                path: path.to_path_buf(),
            });
        }
        let ck: Self = serde_json::from_slice(&fs::read(path)?)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::format(0, format!("not a checkpoint (format {:?})", ck.format)));
        }
        if ck.version != CHECKPOINT_VERSION {
            return Err(Error::format(0, format!("unsupported checkpoint version {}", ck.version)));
        }
        Ok(ck)
    }

    pub(crate) fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind != kind {
            return Err(Error::format(0, format!("expected a {kind} checkpoint, found {}", self.kind)));
        }
        Ok(())
    }

    /// Splits `params` into named sections following `layout`.
    pub(crate) fn sections_from(layout: &[(String, Vec<usize>)], params: &[f64]) -> Vec<Section> {
        let mut at = 0;
        layout
            .iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let s = Section {
                    name: name.clone(),
                    shape: shape.clone(),
                    data: params[at..at + n].to_vec(),
                };
                at += n;
                s
            })
            .collect()
    }

    /// Concatenates sections after checking them against `layout`.
    pub(crate) fn params_from(sections: &[Section], layout: &[(String, Vec<usize>)]) -> Result<Vec<f64>> {
        if sections.len() != layout.len() {
            return Err(Error::format(
                0,
                format!("expected {} sections, found {}", layout.len(), sections.len()),
            ));
        }
        let mut params = Vec::new();
        for (s, (name, shape)) in sections.iter().zip(layout) {
            if &s.name != name || &s.shape != shape {
                return Err(Error::format(
                    0,
                    format!("section {:?} {:?} does not match expected {name:?} {shape:?}", s.name, s.shape),
                ));
            }
            if s.data.len() != shape.iter().product::<usize>() {
                return Err(Error::format(0, format!("section {name:?} has wrong length")));
            }
            params.extend_from_slice(&s.data);
        }
        Ok(params)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierHeader {
    model: ModelSpec,
    inputs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_shape: Option<ImageShape>,
    num_classes: usize,
}

fn layout(spec: ModelSpec, inputs: usize, image: Option<ImageShape>, classes: usize) -> Vec<(String, Vec<usize>)> {
    let l = |n: &str, s: Vec<usize>| (n.to_string(), s);
    match spec {
        ModelSpec::SoftmaxLinear => vec![l("weight", vec![classes, inputs]), l("bias", vec![classes])],
        ModelSpec::Mlp { hidden } => vec![
            l("w1", vec![hidden, inputs]),
            l("b1", vec![hidden]),
            l("w2", vec![classes, hidden]),
            l("b2", vec![classes]),
        ],
        ModelSpec::TinyConv { filters1, filters2 } => {
            let cin = image.map_or(1, |i| i.channels);
            let flat = image.map_or(filters2, |i| TinyConv::flat_len(i, filters2));
            vec![
                l("conv1.weight", vec![filters1, 3, 3, cin]),
                l("conv1.bias", vec![filters1]),
                l("conv2.weight", vec![filters2, 3, 3, filters1]),
                l("conv2.bias", vec![filters2]),
                l("fc.weight", vec![classes, flat]),
                l("fc.bias", vec![classes]),
            ]
        }
    }
}

impl DifferentiableModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let image = match self {
            DifferentiableModel::TinyConv(m) => Some(m.image()),
            _ => None,
        };
        let header = ClassifierHeader {
            model: self.spec(),
            inputs: self.input_len(),
            image_shape: image,
            num_classes: self.num_classes(),
        };
        let lay = layout(self.spec(), self.input_len(), image, self.num_classes());
        Checkpoint::new(
            "classifier",
            serde_json::to_value(header).expect("header serializes"),
            Checkpoint::sections_from(&lay, self.params()),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("classifier")?;
        let h: ClassifierHeader = serde_json::from_value(ck.header.clone())?;
        let lay = layout(h.model, h.inputs, h.image_shape, h.num_classes);
        let params = Checkpoint::params_from(&ck.sections, &lay)?;
        Ok(match h.model {
            ModelSpec::SoftmaxLinear => {
                Self::SoftmaxLinear(SoftmaxLinear::from_params(h.inputs, h.num_classes, params))
            }
            ModelSpec::Mlp { hidden } => Self::Mlp(Mlp::from_params(h.inputs, hidden, h.num_classes, params)),
            ModelSpec::TinyConv { filters1, filters2 } => {
                let image = h
                    .image_shape
                    .ok_or_else(|| Error::format(0, "tiny-conv checkpoint without image_shape"))?;
                if image.len() != h.inputs {
                    return Err(Error::format(0, "image_shape disagrees with inputs"));
                }
                Self::TinyConv(TinyConv::from_params(image, filters1, filters2, h.num_classes, params))
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}
