use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Classifier, DifferentiableModel, LabeledDataset, ModelSpec, Trainable};
use crate::error::{Error, Result};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Heavy-ball momentum on the SGD update; 0 gives plain SGD.
    #[serde(default)]
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
        }
    }
}

/// Mini-batch SGD on mean cross-entropy. Returns the fitted model and its
/// final training accuracy.
///
/// Initialization and shuffling draw from disjoint streams of `cfg.seed`, and
/// per-batch gradients are reduced in example order, so the result is
/// bit-identical across runs and thread counts.
pub fn train_classifier(
    dataset: &LabeledDataset,
    spec: ModelSpec,
    cfg: &TrainConfig,
) -> Result<(DifferentiableModel, f64)> {
    if dataset.is_empty() {
        return Err(Error::arg("cannot train on an empty dataset"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::arg("learning rate must be positive"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::arg("batch size must be positive"));
    }
    let mut init_rng = SeededRng::new(cfg.seed, 0);
    let mut model = DifferentiableModel::init(
        spec,
        dataset.image_shape(),
        dataset.num_classes(),
        &mut init_rng,
    )?;
    let mut order_rng = SeededRng::new(cfg.seed, 1);
    let mut velocity = vec![0.0; model.params().len()];
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let examples = dataset.examples();

    for _ in 0..cfg.epochs {
        order_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let grads: Vec<Vec<f64>> = batch
                .par_iter()
                .map(|&i| {
                    let ex = &examples[i];
                    model.loss_and_param_gradient(&ex.pixels, ex.label).map(|(_, g)| g)
                })
                .collect::<Result<_>>()?;
            let scale = cfg.learning_rate / batch.len() as f64;
            let mut step = vec![0.0; velocity.len()];
            for g in &grads {
                crate::numerics::axpy(1.0, g, &mut step);
            }
            for ((v, s), p) in velocity.iter_mut().zip(&step).zip(model.params_mut()) {
                *v = cfg.momentum * *v - scale * s;
                *p += *v;
            }
        }
    }
    let acc = accuracy(&model, dataset)?;
    Ok((model, acc))
}

/// Fraction of examples whose arg-max prediction (lowest index on ties)
/// equals the label. Empty datasets score 0.
pub fn accuracy(model: &dyn Classifier, dataset: &LabeledDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Ok(0.0);
    }
    let hits = dataset
        .examples()
        .par_iter()
        .map(|ex| model.predict(&ex.pixels).map(|p| usize::from(p == ex.label)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / dataset.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Example;
    use crate::numerics::ImageShape;

    fn blobs(seed: u64) -> LabeledDataset {
        let shape = ImageShape::new(2, 2, 1).unwrap();
        let mut rng = SeededRng::new(seed, 0);
        let centers = [[60.0, 60.0, 200.0, 200.0], [200.0, 200.0, 60.0, 60.0]];
        let examples = (0..100)
            .map(|i| {
                let label = i % 2;
                let pixels = centers[label]
                    .iter()
                    .map(|c| (c + 15.0 * rng.normal()).clamp(0.0, 255.0))
                    .collect();
                Example { pixels, label }
            })
            .collect();
        LabeledDataset::new(examples, shape, 2).unwrap()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = blobs(0);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (m, _) = train_classifier(&ds, ModelSpec::SoftmaxLinear, &cfg).unwrap();
        let init = DifferentiableModel::init(
            ModelSpec::SoftmaxLinear,
            ds.image_shape(),
            2,
            &mut SeededRng::new(cfg.seed, 0),
        )
        .unwrap();
        assert_eq!(m, init);
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let ds = blobs(1);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 11,
            ..TrainConfig::default()
        };
        let spec = ModelSpec::Mlp { hidden: 5 };
        let (a, _) = train_classifier(&ds, spec, &cfg).unwrap();
        let (b, _) = train_classifier(&ds, spec, &cfg).unwrap();
        assert_eq!(
            a.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>(),
            b.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn separable_blobs_reach_high_accuracy() {
        for seed in 0..3 {
            let ds = blobs(seed);
            let cfg = TrainConfig {
                epochs: 20,
                seed,
                ..TrainConfig::default()
            };
            let (_, acc) = train_classifier(&ds, ModelSpec::SoftmaxLinear, &cfg).unwrap();
            assert!(acc >= 0.95, "seed {seed}: {acc}");
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        let ds = LabeledDataset::new(vec![], ImageShape::new(1, 1, 1).unwrap(), 2).unwrap();
        assert!(train_classifier(&ds, ModelSpec::SoftmaxLinear, &TrainConfig::default()).is_err());
        assert_eq!(accuracy(&DifferentiableModel::zeros(ModelSpec::SoftmaxLinear, ds.image_shape(), 2).unwrap(), &ds).unwrap(), 0.0);
    }

    #[test]
    fn constant_predictor_accuracy() {
        let shape = ImageShape::new(1, 2, 1).unwrap();
        let mk = |label| Example {
            pixels: vec![10.0, 20.0],
            label,
        };
        // Zero weights predict class 0 everywhere (tie broken low).
        let m = DifferentiableModel::zeros(ModelSpec::SoftmaxLinear, shape, 3).unwrap();
        let all0 = LabeledDataset::new(vec![mk(0), mk(0)], shape, 3).unwrap();
        let none = LabeledDataset::new(vec![mk(1), mk(2)], shape, 3).unwrap();
        assert_eq!(accuracy(&m, &all0).unwrap(), 1.0);
        assert_eq!(accuracy(&m, &none).unwrap(), 0.0);
    }
}
