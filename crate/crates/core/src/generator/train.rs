use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{GeneratorArch, ScalingFactorGenerator};
use crate::attacks::{project, run_attack_with, AttackConfig, AttackResult, StepRule};
use crate::error::{Error, Result};
use crate::models::{Classifier, LabeledDataset};
use crate::numerics::{dot, norm_l1, SeededRng};

/// Update rule for the ascent on θ_t.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorOptimizer {
    /// `θ += β·v`, `v = momentum·v + ∇θ loss`.
    Sgd {
        #[serde(default)]
        momentum: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

impl Default for GeneratorOptimizer {
    fn default() -> Self {
        GeneratorOptimizer::Sgd { momentum: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorTrainConfig {
    /// Outer iterations N.
    pub iterations: usize,
    /// Attack steps T (one network per step).
    pub steps: usize,
    /// Ascent rate β.
    pub learning_rate: f64,
    pub epsilon: f64,
    #[serde(default = "default_arch")]
    pub arch: GeneratorArch,
    /// `s` in γ = s·softplus(raw).
    pub head_scale: f64,
    #[serde(default)]
    pub optimizer: GeneratorOptimizer,
    /// Examples per outer iteration; 1 reproduces the one-sample loop.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_arch() -> GeneratorArch {
    GeneratorArch::MLP
}

fn default_batch() -> usize {
    1
}

impl GeneratorTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::config("generator training needs T ≥ 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("generator learning rate must be positive"));
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::config("epsilon must be ≥ 0"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch size must be ≥ 1"));
        }
        if let GeneratorOptimizer::Adam { beta1, beta2 } = self.optimizer {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
                return Err(Error::config("Adam betas must lie in [0, 1)"));
            }
        }
        Ok(())
    }
}

struct OptState {
    first: Vec<f64>,
    second: Vec<f64>,
    count: i32,
}

impl OptState {
    fn new(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            count: 0,
        }
    }

    fn ascend(&mut self, opt: GeneratorOptimizer, lr: f64, theta: &mut [f64], grad: &[f64]) {
        self.count += 1;
        match opt {
            GeneratorOptimizer::Sgd { momentum } => {
                for ((p, v), g) in theta.iter_mut().zip(&mut self.first).zip(grad) {
                    *v = momentum * *v + g;
                    *p += lr * *v;
                }
            }
            GeneratorOptimizer::Adam { beta1, beta2 } => {
                let c1 = 1.0 - beta1.powi(self.count);
                let c2 = 1.0 - beta2.powi(self.count);
                for (((p, m), v), g) in theta.iter_mut().zip(&mut self.first).zip(&mut self.second).zip(grad) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p += lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

/// Per-step parameter gradients of one inner rollout: gradient from `cx`,
/// scaled step, projection, loss on `cy`. `None` marks steps cut short by a
/// zero gradient.
fn rollout(
    gen: &ScalingFactorGenerator,
    cx: &dyn Classifier,
    cy: &dyn Classifier,
    x: &[f64],
    y: usize,
    epsilon: f64,
) -> Result<Vec<Option<Vec<f64>>>> {
    let mut out = vec![None; gen.steps()];
    let mut x_adv = x.to_vec();
    for (t, slot) in out.iter_mut().enumerate() {
        let grad = cx.input_gradient(&x_adv, y)?;
        if norm_l1(&grad) == 0.0 {
            break;
        }
        let gamma = gen.gamma_forward(t, &x_adv, &grad)?;
        let stepped: Vec<f64> = x_adv.iter().zip(&grad).map(|(a, g)| a + gamma * g).collect();
        let next = project(&stepped, x, epsilon);
        let (_, dj) = cy.loss_and_input_gradient(&next, y)?;
        // ∂x_t/∂γ is the gradient where the projection did not bind.
        let active: Vec<f64> = grad
            .iter()
            .zip(stepped.iter().zip(&next))
            .map(|(g, (s, n))| if s == n { *g } else { 0.0 })
            .collect();
        let upstream = dot(&dj, &active);
        *slot = Some(gen.gamma_and_parameter_gradient(t, &x_adv, &grad, upstream)?.1);
        x_adv = next;
    }
    Ok(out)
}

/// Trains a fresh generator on `pool`. Each iteration draws examples and an
/// ordered pair of distinct models: the first supplies attack gradients,
/// the second scores the result, and θ_t ascends the scoring loss at step t.
pub fn train_generator(
    dataset: &LabeledDataset,
    pool: &[&dyn Classifier],
    cfg: &GeneratorTrainConfig,
) -> Result<ScalingFactorGenerator> {
    cfg.validate()?;
    if pool.len() < 2 {
        return Err(Error::config(format!(
            "generator training needs at least two white-box models, got {}",
            pool.len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::config("generator training needs a non-empty dataset"));
    }
    let image = dataset.image_shape();
    if pool.iter().any(|m| m.input_len() != image.len()) {
        return Err(Error::config("model pool disagrees with the dataset image shape"));
    }
    let mut gen = ScalingFactorGenerator::init(
        cfg.arch,
        image,
        cfg.steps,
        cfg.head_scale,
        &SeededRng::new(cfg.seed, 0),
    )?;
    let n_params = gen.params(0).len();
    let mut states: Vec<OptState> = (0..cfg.steps).map(|_| OptState::new(n_params)).collect();
    let mut sampler = SeededRng::new(cfg.seed, 1);
    for _ in 0..cfg.iterations {
        let draws: Vec<(usize, usize, usize)> = (0..cfg.batch_size)
            .map(|_| {
                let i = sampler.below(dataset.len());
                let pair = sampler.sample_indices(pool.len(), 2);
                (i, pair[0], pair[1])
            })
            .collect();
        let rollouts = draws
            .par_iter()
            .map(|&(i, a, b)| {
                let ex = &dataset.examples()[i];
                rollout(&gen, pool[a], pool[b], &ex.pixels, ex.label, cfg.epsilon)
            })
            .collect::<Result<Vec<_>>>()?;
        let scale = 1.0 / cfg.batch_size as f64;
        for (t, state) in states.iter_mut().enumerate() {
            let mut total = vec![0.0; n_params];
            let mut any = false;
            for g in rollouts.iter().filter_map(|r| r[t].as_ref()) {
                crate::numerics::axpy(scale, g, &mut total);
                any = true;
            }
            if any {
                state.ascend(cfg.optimizer, cfg.learning_rate, gen.params_mut(t), &total);
            }
        }
    }
    Ok(gen)
}

/// Attack with γ_t from `generator` along the ensemble gradient of `models`;
/// success flags are scored on `targets`.
pub fn run_attack_adaptive(
    generator: &ScalingFactorGenerator,
    models: &[&dyn Classifier],
    targets: &[&dyn Classifier],
    x: &[f64],
    y: usize,
    epsilon: f64,
    steps: usize,
) -> Result<AttackResult> {
    if steps != 0 && steps != generator.steps() {
        return Err(Error::config(format!(
            "generator was trained for {} steps, attack requested {steps}",
            generator.steps()
        )));
    }
    let cfg = AttackConfig::new(epsilon, steps, StepRule::Adaptive { generator: None });
    let mut provider = generator;
    let mut rng = SeededRng::new(0, 0);
    run_attack_with(models, targets, x, generator.image(), y, &cfg, Some(&mut provider), &mut rng)
}
