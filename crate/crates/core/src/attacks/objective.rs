use crate::error::{Error, Result};
use crate::models::Classifier;

/// A scalar the attack ascends, with its input gradient.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Mean cross-entropy over an ensemble of classifiers. In targeted mode the
/// objective is the negated loss toward the target label, so ascent always
/// advances the attack.
pub struct EnsembleObjective<'a> {
    models: &'a [&'a dyn Classifier],
    label: usize,
    targeted: bool,
}

impl<'a> EnsembleObjective<'a> {
    pub fn new(models: &'a [&'a dyn Classifier], label: usize, targeted: bool) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::arg("ensemble needs at least one model"))?;
        if models.iter().any(|m| m.input_len() != first.input_len()) {
            return Err(Error::arg("ensemble members disagree on input shape"));
        }
        Ok(Self {
            models,
            label,
            targeted,
        })
    }

    /// Mean cross-entropy w.r.t. the objective's label (not negated).
    pub fn mean_loss(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for m in self.models {
            total += m.cross_entropy_loss(x, self.label)?;
        }
        Ok(total / self.models.len() as f64)
    }
}

impl Objective for EnsembleObjective<'_> {
    fn dim(&self) -> usize {
        self.models[0].input_len()
    }

    fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (loss, mut grad) = ensemble_loss_and_gradient(self.models, x, self.label)?;
        if self.targeted {
            grad.iter_mut().for_each(|g| *g = -*g);
            Ok((-loss, grad))
        } else {
            Ok((loss, grad))
        }
    }
}

fn ensemble_loss_and_gradient(models: &[&dyn Classifier], x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    if models.is_empty() {
        return Err(Error::arg("ensemble needs at least one model"));
    }
    let scale = 1.0 / models.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; x.len()];
    for m in models {
        let (l, g) = m.loss_and_input_gradient(x, y)?;
        loss += scale * l;
        crate::numerics::axpy(scale, &g, &mut grad);
    }
    Ok((loss, grad))
}

/// Gradient of the mean of per-model cross-entropy losses.
pub fn ensemble_gradient(models: &[&dyn Classifier], x: &[f64], y: usize) -> Result<Vec<f64>> {
    Ok(ensemble_loss_and_gradient(models, x, y)?.1)
}
