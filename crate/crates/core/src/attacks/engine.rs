use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::numerics::{norm_l1, ImageShape, SeededRng};

use super::objective::{EnsembleObjective, Objective};
use super::step::{apply_step, project_within};
use super::transforms::{emi_with, momentum_accumulate, sim_with, tim_smooth, unit_linf, vt_with, DimResize};
use super::{AttackConfig, AttackResult, StepRule, Transform};

/// Supplies the per-step scaling factor of a scaled update.
pub trait ScaleProvider {
    /// `step` counts from 0; `direction` is what the step will be taken along.
    fn gamma(&mut self, step: usize, x_adv: &[f64], direction: &[f64]) -> Result<f64>;
}

/// What the loop reports after each executed step.
#[derive(Debug, Clone, Copy)]
pub struct StepRecord<'a> {
    pub step: usize,
    pub step_size: f64,
    pub direction: &'a [f64],
    /// Projected iterate after the step.
    pub iterate: &'a [f64],
}

#[derive(Debug, Default)]
struct PipelineState {
    vt_variance: Vec<f64>,
    emi_direction: Vec<f64>,
}

/// The transform list of an [`AttackConfig`] composed into one gradient
/// estimator. VT and EMI state lives here and is carried across steps.
#[derive(Debug)]
pub struct GradientPipeline {
    transforms: Vec<Transform>,
    image: ImageShape,
    epsilon: f64,
    state: PipelineState,
}

impl GradientPipeline {
    pub fn new(cfg: &AttackConfig, image: ImageShape) -> Result<Self> {
        cfg.validate()?;
        let d = image.len();
        Ok(Self {
            transforms: cfg.transforms.clone(),
            image,
            epsilon: cfg.epsilon,
            state: PipelineState {
                vt_variance: vec![0.0; d],
                emi_direction: vec![0.0; d],
            },
        })
    }

    /// Transformed gradient of `objective` at `x`.
    pub fn gradient(&mut self, objective: &dyn Objective, x: &[f64], rng: &mut SeededRng) -> Result<Vec<f64>> {
        if x.len() != self.image.len() || objective.dim() != x.len() {
            return Err(Error::Shape {
                expected: vec![self.image.height, self.image.width, self.image.channels],
                actual: vec![x.len()],
            });
        }
        estimate(&self.transforms, &mut self.state, objective, self.image, self.epsilon, x, rng)
    }
}

fn estimate(
    transforms: &[Transform],
    state: &mut PipelineState,
    objective: &dyn Objective,
    image: ImageShape,
    epsilon: f64,
    x: &[f64],
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let Some((last, rest)) = transforms.split_last() else {
        return Ok(objective.loss_and_gradient(x)?.1);
    };
    match *last {
        Transform::Dim { p, min_scale } => match DimResize::sample(image, p, min_scale, rng) {
            Some(d) => {
                let g = estimate(rest, state, objective, image, epsilon, &d.apply(x), rng)?;
                Ok(d.backprop(&g))
            }
            None => estimate(rest, state, objective, image, epsilon, x, rng),
        },
        Transform::Tim { k, sigma } => {
            let g = estimate(rest, state, objective, image, epsilon, x, rng)?;
            tim_smooth(&g, image, k, sigma.unwrap_or(k as f64 / 3.0))
        }
        Transform::Sim { m } => sim_with(
            &mut |v, r| estimate(rest, state, objective, image, epsilon, v, r),
            x,
            m,
            rng,
        ),
        Transform::Vt { n, beta } => {
            let prev = std::mem::take(&mut state.vt_variance);
            let (tuned, variance) = vt_with(
                &mut |v, r| estimate(rest, state, objective, image, epsilon, v, r),
                x,
                &prev,
                n,
                beta,
                epsilon,
                rng,
            )?;
            state.vt_variance = variance;
            Ok(tuned)
        }
        Transform::Emi { n, eta } => {
            let prev = std::mem::take(&mut state.emi_direction);
            let mean = emi_with(
                &mut |v, r| estimate(rest, state, objective, image, epsilon, v, r),
                x,
                &prev,
                n,
                eta,
                rng,
            )?;
            state.emi_direction = unit_linf(&mean);
            Ok(mean)
        }
    }
}

/// Final iterate of [`attack_loop`].
#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutcome {
    pub adversarial: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub steps_used: usize,
    pub degenerate: bool,
}

/// The iterative update: transformed gradient, optional momentum, step rule,
/// projection. With `provider` set, its γ_t replaces the rule's constant;
/// an adaptive rule requires one.
pub fn attack_loop(
    objective: &dyn Objective,
    x: &[f64],
    image: ImageShape,
    cfg: &AttackConfig,
    mut provider: Option<&mut dyn ScaleProvider>,
    rng: &mut SeededRng,
    mut on_step: impl FnMut(&StepRecord<'_>),
) -> Result<LoopOutcome> {
    let mut pipeline = GradientPipeline::new(cfg, image)?;
    if matches!(cfg.step_rule, StepRule::Adaptive { .. }) && provider.is_none() {
        return Err(Error::config("adaptive step rule needs a scaling-factor generator"));
    }
    let mut x_adv = x.to_vec();
    let mut momentum = vec![0.0; x.len()];
    let mut step_sizes = Vec::with_capacity(cfg.steps);
    let mut degenerate = false;
    for t in 0..cfg.steps {
        let grad = pipeline.gradient(objective, &x_adv, rng)?;
        let direction = match cfg.momentum {
            Some(mu) => match momentum_accumulate(&momentum, &grad, mu) {
                Ok(m) => {
                    momentum = m;
                    momentum.clone()
                }
                Err(Error::DegenerateGradient) => {
                    degenerate = true;
                    break;
                }
                Err(e) => return Err(e),
            },
            None if norm_l1(&grad) == 0.0 => {
                degenerate = true;
                break;
            }
            None => grad,
        };
        let size = match provider.as_deref_mut() {
            Some(p) => {
                let g = p.gamma(t, &x_adv, &direction)?;
                if !g.is_finite() {
                    return Err(Error::Evaluation { index: t });
                }
                Some(g)
            }
            None => None,
        };
        let stepped = apply_step(&x_adv, &direction, &cfg.step_rule, size)?;
        x_adv = project_within(&stepped, x, cfg.epsilon, cfg.pixel_bounds);
        let step_size = match (size, &cfg.step_rule) {
            (Some(g), _) => g,
            (None, StepRule::Sign { alpha }) => *alpha,
            (None, StepRule::FixedScale { gamma }) => *gamma,
            (None, StepRule::Adaptive { .. }) => unreachable!("adaptive rule without provider"),
        };
        step_sizes.push(step_size);
        on_step(&StepRecord {
            step: t,
            step_size,
            direction: &direction,
            iterate: &x_adv,
        });
    }
    Ok(LoopOutcome {
        steps_used: step_sizes.len(),
        adversarial: x_adv,
        step_sizes,
        degenerate,
    })
}

/// Attack `sources` (ensembled by loss mean) and score on `targets`.
#[allow(clippy::too_many_arguments)]
pub fn run_attack(
    sources: &[&dyn Classifier],
    targets: &[&dyn Classifier],
    x: &[f64],
    image: ImageShape,
    y: usize,
    cfg: &AttackConfig,
    rng: &mut SeededRng,
) -> Result<AttackResult> {
    run_attack_with(sources, targets, x, image, y, cfg, None, rng)
}

/// [`run_attack`] with an explicit scaling-factor provider.
#[allow(clippy::too_many_arguments)]
pub fn run_attack_with(
    sources: &[&dyn Classifier],
    targets: &[&dyn Classifier],
    x: &[f64],
    image: ImageShape,
    y: usize,
    cfg: &AttackConfig,
    provider: Option<&mut dyn ScaleProvider>,
    rng: &mut SeededRng,
) -> Result<AttackResult> {
    let first = sources
        .first()
        .ok_or_else(|| Error::arg("attack needs at least one source model"))?;
    cfg.validate_for(y, first.num_classes())?;
    if x.len() != first.input_len() || x.len() != image.len() {
        return Err(Error::Shape {
            expected: vec![first.input_len()],
            actual: vec![x.len()],
        });
    }
    let label = if cfg.targeted { cfg.target_label.unwrap_or(y) } else { y };
    let objective = EnsembleObjective::new(sources, label, cfg.targeted)?;
    let outcome = attack_loop(&objective, x, image, cfg, provider, rng, |_| {})?;
    let success = score(targets, &outcome.adversarial, y, cfg)?;
    Ok(AttackResult {
        final_loss: objective.mean_loss(&outcome.adversarial)?,
        adversarial: outcome.adversarial,
        step_sizes: outcome.step_sizes,
        success,
        steps_used: outcome.steps_used,
        degenerate: outcome.degenerate,
    })
}

fn score(targets: &[&dyn Classifier], x_adv: &[f64], y: usize, cfg: &AttackConfig) -> Result<Vec<bool>> {
    targets
        .iter()
        .map(|m| {
            let pred = m.predict(x_adv)?;
            Ok(match cfg.target_label.filter(|_| cfg.targeted) {
                Some(t) => pred == t,
                None => pred != y,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::Method;
    use crate::models::{DifferentiableModel, ModelSpec};
    use crate::numerics::{norm_linf, sign};
    use proptest::prelude::*;

    fn image() -> ImageShape {
        ImageShape::new(4, 4, 1).unwrap()
    }

    fn model(seed: u64, spec: ModelSpec) -> DifferentiableModel {
        let mut rng = SeededRng::new(seed, 0);
        DifferentiableModel::init(spec, image(), 3, &mut rng).unwrap()
    }

    fn input(seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed, 9);
        (0..16).map(|_| rng.uniform_range(0.0, 255.0)).collect()
    }

    #[test]
    fn zero_budget_returns_original() {
        let m = model(1, ModelSpec::Mlp { hidden: 6 });
        let ms: [&dyn Classifier; 1] = [&m];
        let x = input(1);
        let clean = m.predict(&x).unwrap();
        for y in 0..3 {
            let cfg = Method::Mifgsm.config(0.0, 5, 1.0);
            let r = run_attack(&ms, &ms, &x, image(), y, &cfg, &mut SeededRng::new(0, 0)).unwrap();
            assert_eq!(r.adversarial, x);
            assert_eq!(r.success, vec![clean != y]);
        }
    }

    #[test]
    fn fgsm_reduction_is_exact() {
        let m = model(2, ModelSpec::Mlp { hidden: 6 });
        let ms: [&dyn Classifier; 1] = [&m];
        let x = input(2);
        let eps = 8.0;
        let cfg = AttackConfig::new(eps, 1, StepRule::Sign { alpha: eps });
        let r = run_attack(&ms, &ms, &x, image(), 0, &cfg, &mut SeededRng::new(0, 0)).unwrap();
        let g = m.input_gradient(&x, 0).unwrap();
        let want: Vec<f64> = x
            .iter()
            .zip(&g)
            .map(|(v, d)| (v + eps * sign(*d)).clamp(0.0, 255.0))
            .collect();
        assert_eq!(r.adversarial, want);
        assert_eq!(Method::Fgsm.config(eps, 10, 1.0), cfg);
    }

    /// Objective with gradient `c·s(x)` where `s` is a fixed sign pattern
    /// that flips with the iterate, so |g_i| = c everywhere.
    struct ConstantMagnitude {
        c: f64,
    }

    impl Objective for ConstantMagnitude {
        fn dim(&self) -> usize {
            16
        }

        fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g = x
                .iter()
                .enumerate()
                .map(|(i, v)| if ((v / 3.0).floor() as i64 + i as i64) % 2 == 0 { self.c } else { -self.c })
                .collect();
            Ok((0.0, g))
        }
    }

    #[test]
    fn sign_and_scale_trajectories_coincide() {
        let obj = ConstantMagnitude { c: 0.37 };
        let x = input(3);
        let gamma = 5.0;
        let mut a = Vec::new();
        let mut b = Vec::new();
        let sign_cfg = AttackConfig::new(12.0, 8, StepRule::Sign { alpha: gamma * obj.c });
        let scale_cfg = AttackConfig::new(12.0, 8, StepRule::FixedScale { gamma });
        attack_loop(&obj, &x, image(), &sign_cfg, None, &mut SeededRng::new(0, 0), |r| {
            a.push(r.iterate.to_vec())
        })
        .unwrap();
        attack_loop(&obj, &x, image(), &scale_cfg, None, &mut SeededRng::new(0, 0), |r| {
            b.push(r.iterate.to_vec())
        })
        .unwrap();
        assert_eq!(a.len(), 8);
        for (p, q) in a.iter().zip(&b) {
            for (u, v) in p.iter().zip(q) {
                assert!((u - v).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn adaptive_rule_needs_provider() {
        let obj = ConstantMagnitude { c: 1.0 };
        let cfg = AttackConfig::new(8.0, 2, StepRule::Adaptive { generator: None });
        let r = attack_loop(&obj, &input(0), image(), &cfg, None, &mut SeededRng::new(0, 0), |_| {});
        assert!(matches!(r, Err(Error::Config(_))));
    }

    struct Constant(f64);

    impl ScaleProvider for Constant {
        fn gamma(&mut self, _: usize, _: &[f64], _: &[f64]) -> Result<f64> {
            Ok(self.0)
        }
    }

    #[test]
    fn constant_provider_matches_fixed_scale() {
        let m = model(4, ModelSpec::Mlp { hidden: 5 });
        let ms: [&dyn Classifier; 1] = [&m];
        let x = input(4);
        let fixed = AttackConfig::new(8.0, 6, StepRule::FixedScale { gamma: 300.0 });
        let adaptive = AttackConfig::new(8.0, 6, StepRule::Adaptive { generator: None });
        let a = run_attack(&ms, &ms, &x, image(), 1, &fixed, &mut SeededRng::new(0, 0)).unwrap();
        let mut p = Constant(300.0);
        let b = run_attack_with(&ms, &ms, &x, image(), 1, &adaptive, Some(&mut p), &mut SeededRng::new(0, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_gradient_stops_early() {
        let m = DifferentiableModel::zeros(ModelSpec::SoftmaxLinear, image(), 3).unwrap();
        let ms: [&dyn Classifier; 1] = [&m];
        let x = input(5);
        for method in [Method::Bim, Method::Mifgsm] {
            let r = run_attack(&ms, &ms, &x, image(), 1, &method.config(8.0, 10, 1.0), &mut SeededRng::new(0, 0)).unwrap();
            assert!(r.degenerate);
            assert_eq!(r.steps_used, 0);
            assert_eq!(r.adversarial, x);
        }
    }

    #[test]
    fn identical_seeds_are_bit_identical() {
        let a = model(6, ModelSpec::Mlp { hidden: 5 });
        let b = model(7, ModelSpec::SoftmaxLinear);
        let ms: [&dyn Classifier; 2] = [&a, &b];
        let x = input(6);
        for method in Method::ALL {
            let cfg = method.config(8.0, 4, 200.0);
            let r1 = run_attack(&ms, &ms, &x, image(), 0, &cfg, &mut SeededRng::new(11, 3)).unwrap();
            let r2 = run_attack(&ms, &ms, &x, image(), 0, &cfg, &mut SeededRng::new(11, 3)).unwrap();
            assert_eq!(r1, r2, "{}", method.name());
        }
    }

    #[test]
    fn small_step_loss_is_monotone() {
        for seed in 0..3 {
            let m = model(20 + seed, ModelSpec::Mlp { hidden: 8 });
            let ms: [&dyn Classifier; 1] = [&m];
            let x = input(seed);
            let obj = EnsembleObjective::new(&ms, 0, false).unwrap();
            let cfg = AttackConfig::new(16.0, 20, StepRule::FixedScale { gamma: 50.0 });
            let mut losses = vec![obj.mean_loss(&x).unwrap()];
            attack_loop(&obj, &x, image(), &cfg, None, &mut SeededRng::new(0, 0), |r| {
                losses.push(obj.mean_loss(r.iterate).unwrap())
            })
            .unwrap();
            for w in losses.windows(2) {
                assert!(w[1] >= w[0] - 1e-12, "seed {seed}: {losses:?}");
            }
        }
    }

    #[test]
    fn targeted_attack_reaches_target() {
        let m = model(8, ModelSpec::SoftmaxLinear);
        let ms: [&dyn Classifier; 1] = [&m];
        let x = input(8);
        let y = m.predict(&x).unwrap();
        let t = (y + 1) % 3;
        let cfg = Method::Mifgsm.config(255.0, 40, 1.0).targeted_at(t);
        let r = run_attack(&ms, &ms, &x, image(), y, &cfg, &mut SeededRng::new(0, 0)).unwrap();
        assert_eq!(r.success, vec![true]);
        assert_eq!(m.predict(&r.adversarial).unwrap(), t);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn budget_holds(
            seed in 0u64..1000,
            eps in 0.0f64..40.0,
            steps in 0usize..6,
            gamma in 1.0f64..5000.0,
            method_idx in 0usize..15,
        ) {
            let m = model(seed % 7, ModelSpec::SoftmaxLinear);
            let ms: [&dyn Classifier; 1] = [&m];
            let x = input(seed);
            let mut cfg = Method::ALL[method_idx].config(eps, steps, gamma);
            if let Some(Transform::Vt { n, .. } | Transform::Emi { n, .. }) = cfg.transforms.first_mut() {
                *n = 3;
            }
            let r = run_attack(&ms, &ms, &x, image(), (seed % 3) as usize, &cfg, &mut SeededRng::new(seed, 1)).unwrap();
            let diff: Vec<f64> = r.adversarial.iter().zip(&x).map(|(a, b)| a - b).collect();
            prop_assert!(norm_linf(&diff) <= eps + 1e-9);
            prop_assert!(r.adversarial.iter().all(|v| (0.0..=255.0).contains(v)));
        }
    }
}
