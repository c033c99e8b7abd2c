use super::{check_input, check_label, glorot, logit_gradient, standardize, Classifier, Trainable, PIXEL_SCALE};
use crate::error::Result;
use crate::numerics::{cross_entropy, SeededRng};

/// `logits = W z + b`, parameters laid out as `[W (C×D) | b (C)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxLinear {
    inputs: usize,
    classes: usize,
    params: Vec<f64>,
}

impl SoftmaxLinear {
    pub fn init(inputs: usize, classes: usize, rng: &mut SeededRng) -> Self {
        let mut params = vec![0.0; classes * inputs + classes];
        glorot(rng, &mut params[..classes * inputs], inputs, classes);
        Self {
            inputs,
            classes,
            params,
        }
    }

    pub(crate) fn from_params(inputs: usize, classes: usize, params: Vec<f64>) -> Self {
        debug_assert_eq!(params.len(), classes * inputs + classes);
        Self {
            inputs,
            classes,
            params,
        }
    }

    fn weights(&self) -> &[f64] {
        &self.params[..self.classes * self.inputs]
    }

    fn bias(&self) -> &[f64] {
        &self.params[self.classes * self.inputs..]
    }

    /// `Wᵀ u`, in standardized-input units.
    pub fn weight_transpose_times(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (row, &uk) in self.weights().chunks_exact(self.inputs).zip(u) {
            crate::numerics::axpy(uk, row, &mut out);
        }
        out
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = x.iter().map(|&v| standardize(v)).collect();
        let logits = self
            .weights()
            .chunks_exact(self.inputs)
            .zip(self.bias())
            .map(|(row, b)| crate::numerics::dot(row, &z) + b)
            .collect();
        (z, logits)
    }
}

impl Classifier for SoftmaxLinear {
    fn input_len(&self) -> usize {
        self.inputs
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(x, self.inputs)?;
        Ok(self.forward(x).1)
    }

    fn loss_and_input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_input(x, self.inputs)?;
        check_label(y, self.classes)?;
        let (_, logits) = self.forward(x);
        let up = logit_gradient(&logits, y);
        let mut g = self.weight_transpose_times(&up);
        g.iter_mut().for_each(|v| *v /= PIXEL_SCALE);
        Ok((cross_entropy(&logits, y), g))
    }
}

impl Trainable for SoftmaxLinear {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_param_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_input(x, self.inputs)?;
        check_label(y, self.classes)?;
        let (z, logits) = self.forward(x);
        let up = logit_gradient(&logits, y);
        let mut grad = vec![0.0; self.params.len()];
        let (gw, gb) = grad.split_at_mut(self.classes * self.inputs);
        for (k, row) in gw.chunks_exact_mut(self.inputs).enumerate() {
            for (r, zi) in row.iter_mut().zip(&z) {
                *r = up[k] * zi;
            }
        }
        gb.copy_from_slice(&up);
        Ok((cross_entropy(&logits, y), grad))
    }
}
