use super::{check_input, check_label, glorot, logit_gradient, standardize, Classifier, Trainable, PIXEL_SCALE};
use crate::error::Result;
use crate::numerics::{axpy, cross_entropy, dot, SeededRng};

/// One-hidden-layer tanh network.
///
/// Parameter layout: `[W1 (H×D) | b1 (H) | W2 (C×H) | b2 (C)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    inputs: usize,
    hidden: usize,
    classes: usize,
    params: Vec<f64>,
}

struct Cache {
    z: Vec<f64>,
    h: Vec<f64>,
    logits: Vec<f64>,
}

impl Mlp {
    pub fn init(inputs: usize, hidden: usize, classes: usize, rng: &mut SeededRng) -> Self {
        let mut m = Self {
            inputs,
            hidden,
            classes,
            params: vec![0.0; Self::param_count(inputs, hidden, classes)],
        };
        let (w1, w2) = (m.w1_range(), m.w2_range());
        glorot(rng, &mut m.params[w1], inputs, hidden);
        glorot(rng, &mut m.params[w2], hidden, classes);
        m
    }

    pub(crate) fn from_params(inputs: usize, hidden: usize, classes: usize, params: Vec<f64>) -> Self {
        debug_assert_eq!(params.len(), Self::param_count(inputs, hidden, classes));
        Self {
            inputs,
            hidden,
            classes,
            params,
        }
    }

    pub(crate) fn param_count(inputs: usize, hidden: usize, classes: usize) -> usize {
        hidden * inputs + hidden + classes * hidden + classes
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn w1_range(&self) -> std::ops::Range<usize> {
        0..self.hidden * self.inputs
    }

    fn b1_range(&self) -> std::ops::Range<usize> {
        let s = self.hidden * self.inputs;
        s..s + self.hidden
    }

    fn w2_range(&self) -> std::ops::Range<usize> {
        let s = self.b1_range().end;
        s..s + self.classes * self.hidden
    }

    fn b2_range(&self) -> std::ops::Range<usize> {
        let s = self.w2_range().end;
        s..s + self.classes
    }

    fn forward(&self, x: &[f64]) -> Cache {
        let z: Vec<f64> = x.iter().map(|&v| standardize(v)).collect();
        let w1 = &self.params[self.w1_range()];
        let b1 = &self.params[self.b1_range()];
        let h: Vec<f64> = w1
            .chunks_exact(self.inputs)
            .zip(b1)
            .map(|(row, b)| (dot(row, &z) + b).tanh())
            .collect();
        let w2 = &self.params[self.w2_range()];
        let b2 = &self.params[self.b2_range()];
        let logits = w2
            .chunks_exact(self.hidden)
            .zip(b2)
            .map(|(row, b)| dot(row, &h) + b)
            .collect();
        Cache { z, h, logits }
    }

    /// Gradient w.r.t. the pre-activation of the hidden layer.
    fn hidden_delta(&self, cache: &Cache, up: &[f64]) -> Vec<f64> {
        let w2 = &self.params[self.w2_range()];
        let mut dh = vec![0.0; self.hidden];
        for (row, &u) in w2.chunks_exact(self.hidden).zip(up) {
            axpy(u, row, &mut dh);
        }
        dh.iter_mut()
            .zip(&cache.h)
            .for_each(|(d, h)| *d *= 1.0 - h * h);
        dh
    }
}

impl Classifier for Mlp {
    fn input_len(&self) -> usize {
        self.inputs
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(x, self.inputs)?;
        Ok(self.forward(x).logits)
    }

    fn loss_and_input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_input(x, self.inputs)?;
        check_label(y, self.classes)?;
        let cache = self.forward(x);
        let up = logit_gradient(&cache.logits, y);
        let da = self.hidden_delta(&cache, &up);
        let w1 = &self.params[self.w1_range()];
        let mut g = vec![0.0; self.inputs];
        for (row, &d) in w1.chunks_exact(self.inputs).zip(&da) {
            axpy(d / PIXEL_SCALE, row, &mut g);
        }
        Ok((cross_entropy(&cache.logits, y), g))
    }
}

impl Trainable for Mlp {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_param_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_input(x, self.inputs)?;
        check_label(y, self.classes)?;
        let cache = self.forward(x);
        let up = logit_gradient(&cache.logits, y);
        let da = self.hidden_delta(&cache, &up);
        let mut grad = vec![0.0; self.params.len()];
        for (k, row) in grad[self.w1_range()].chunks_exact_mut(self.inputs).enumerate() {
            for (r, zi) in row.iter_mut().zip(&cache.z) {
                *r = da[k] * zi;
            }
        }
        let b1 = self.b1_range();
        grad[b1].copy_from_slice(&da);
        for (k, row) in grad[self.w2_range()].chunks_exact_mut(self.hidden).enumerate() {
            for (r, hi) in row.iter_mut().zip(&cache.h) {
                *r = up[k] * hi;
            }
        }
        let b2 = self.b2_range();
        grad[b2].copy_from_slice(&up);
        Ok((cross_entropy(&cache.logits, y), grad))
    }
}
