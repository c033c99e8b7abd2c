//! Self-checks of the numerical core, run by `apaa verify-props`.

use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AttackConfig, Method, Objective, StepRule};
use crate::error::Result;
use crate::generator::{GeneratorArch, ScalingFactorGenerator};
use crate::interaction::{
    coefficients, exact_mu, mean_interaction_exact, predicted_delta, predicted_interaction,
    shapley_interaction_exact, shapley_value_exact, simulate_raw, AnalyticGame, CoalitionGame, ExactCoefficients,
    QuadraticCoalition,
};
use crate::models::{Classifier, DifferentiableModel, ModelSpec, Trainable};
use crate::numerics::{finite_diff_gradient, norm_l2, norm_linf, relative_error, ImageShape, SeededRng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> PropertyCheck {
    PropertyCheck {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Runs every property check. `quick` trims sample counts by 10×.
pub fn verify_properties(quick: bool) -> Result<Vec<PropertyCheck>> {
    let draws = if quick { 10 } else { 100 };
    Ok(vec![
        gradient_oracle(draws)?,
        coefficient_recurrences()?,
        trajectory_prediction()?,
        shapley_axioms()?,
        interaction_prediction()?,
        sign_scale_equivalence()?,
        budget_safety(draws * 10)?,
    ])
}

fn gradient_oracle(draws: u64) -> Result<PropertyCheck> {
    let image = ImageShape::new(6, 6, 1)?;
    let specs = [
        ModelSpec::SoftmaxLinear,
        ModelSpec::Mlp { hidden: 7 },
        ModelSpec::TinyConv { filters1: 3, filters2: 4 },
    ];
    let mut worst = 0.0f64;
    for spec in specs {
        for seed in 0..draws {
            let mut rng = SeededRng::new(seed, 1);
            let m = DifferentiableModel::init(spec, image, 3, &mut rng)?;
            let x: Vec<f64> = (0..image.len()).map(|_| rng.uniform_range(0.0, 255.0)).collect();
            let y = rng.below(3);
            let (_, g) = m.loss_and_input_gradient(&x, y)?;
            let fd = finite_diff_gradient(|v| m.cross_entropy_loss(v, y).unwrap_or(f64::NAN), &x, 1e-2)?;
            worst = worst.max(relative_error(&g, &fd));
            let (_, gp) = m.loss_and_param_gradient(&x, y)?;
            let fdp = finite_diff_gradient(
                |p| {
                    let mut c = m.clone();
                    c.params_mut().copy_from_slice(p);
                    c.cross_entropy_loss(&x, y).unwrap_or(f64::NAN)
                },
                m.params(),
                1e-5,
            )?;
            worst = worst.max(relative_error(&gp, &fdp));
        }
    }
    let archs = [
        (GeneratorArch::Mlp { hidden1: 6, hidden2: 4 }, ImageShape::new(3, 3, 2)?),
        (GeneratorArch::Conv { channels: 3, hidden: 4 }, ImageShape::new(8, 8, 1)?),
    ];
    for (arch, img) in archs {
        for seed in 0..draws {
            let rng = SeededRng::new(seed, 2);
            let mut g = ScalingFactorGenerator::init(arch, img, 1, 2.0, &rng)?;
            let mut r = rng.fork(1);
            g.params_mut(0).iter_mut().for_each(|p| *p += 0.05 * r.normal());
            let x: Vec<f64> = (0..img.len()).map(|_| r.uniform_range(0.0, 255.0)).collect();
            let d: Vec<f64> = (0..img.len()).map(|_| r.normal()).collect();
            let analytic = g.gamma_parameter_gradient(0, &x, &d, 1.0)?;
            let fd = finite_diff_gradient(
                |p| {
                    let mut h = g.clone();
                    h.params_mut(0).copy_from_slice(p);
                    h.gamma_forward(0, &x, &d).unwrap_or(f64::NAN)
                },
                g.params(0),
                1e-6,
            )?;
            worst = worst.max(relative_error(&analytic, &fd));
        }
    }
    Ok(check(
        "gradient-oracle",
        worst < 1e-5,
        format!("max relative error {worst:.3e} over {draws} points per model and generator"),
    ))
}

fn coefficient_recurrences() -> Result<PropertyCheck> {
    let mut ok = true;
    for mu in [0.0, 0.5, 1.0, 1.5] {
        let q = exact_mu(mu)?;
        let mut prev = ExactCoefficients::closed_form(1, &q)?;
        for m in 2..=50 {
            let next = ExactCoefficients::closed_form(m, &q)?;
            ok &= prev.advance() == next;
            prev = next;
        }
    }
    let one = coefficients(1, 0.7)?;
    let three = coefficients(3, 1.0)?;
    ok &= (one.a, one.b, one.c, one.d) == (1.0, 0.0, 1.0, 0.0);
    ok &= (three.a, three.b, three.c, three.d) == (3.0, 4.0, 6.0, 5.0);
    Ok(check(
        "coefficient-recurrences",
        ok,
        "closed forms satisfy the recurrences exactly for m ≤ 50".into(),
    ))
}

fn symmetric_game(n: usize, eta: f64, seed: u64) -> Result<AnalyticGame> {
    let mut rng = SeededRng::new(seed, 3);
    let g: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = rng.normal();
            rows[i][j] = v;
            rows[j][i] = v;
        }
    }
    let h = Tensor::matrix(&rows)?;
    let s = eta / h.norm();
    AnalyticGame::at_origin(g, h.scale(s))
}

/// Ratios `err(η_k) / err(η_{k+1})` over consecutive decades of η.
fn decay_ratios(err: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    let e: Vec<f64> = [1e-2, 1e-3, 1e-4].iter().map(|&eta| err(eta)).collect::<Result<_>>()?;
    Ok(e.windows(2).map(|w| w[0] / w[1]).collect())
}

fn trajectory_prediction() -> Result<PropertyCheck> {
    let mut ratios = Vec::new();
    for mu in [0.5, 1.0] {
        for m in [3, 5, 10] {
            let s = coefficients(m, mu)?;
            ratios.extend(decay_ratios(|eta| {
                let game = symmetric_game(8, eta, m as u64)?;
                let (_, sim) = simulate_raw(&game, mu, 1.0, m)?;
                let pred = predicted_delta(&s, 1.0, &game)?;
                let d: Vec<f64> = sim.iter().zip(&pred).map(|(a, b)| a - b).collect();
                Ok(norm_l2(&d))
            })?);
        }
    }
    let ok = ratios.iter().all(|r| (100.0 / 3.0..=300.0).contains(r));
    Ok(check(
        "trajectory-prediction",
        ok,
        format!("error drop per 10× curvature: {}", fmt_range(&ratios)),
    ))
}

fn fmt_range(v: &[f64]) -> String {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    format!("{lo:.1}..{hi:.1}")
}

struct TableGame(Vec<f64>, usize);

impl CoalitionGame for TableGame {
    fn players(&self) -> usize {
        self.1
    }

    fn value(&self, members: &[bool]) -> Result<f64> {
        let idx = members.iter().enumerate().fold(0, |acc, (i, &m)| acc | ((m as usize) << i));
        Ok(self.0[idx])
    }
}

fn shapley_axioms() -> Result<PropertyCheck> {
    let mut worst_eff = 0.0f64;
    for n in 1..=8 {
        let mut rng = SeededRng::new(n as u64, 4);
        let table: Vec<f64> = (0..1usize << n).map(|_| rng.normal()).collect();
        let game = TableGame(table, n);
        let total: f64 = (0..n).map(|i| shapley_value_exact(&game, i)).sum::<Result<f64>>()?;
        worst_eff = worst_eff.max((total - (game.0[(1 << n) - 1] - game.0[0])).abs());
    }
    let q = symmetric_game(6, 1.0, 9)?;
    let mut rng = SeededRng::new(9, 5);
    let delta: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
    let coalition = QuadraticCoalition { game: &q, delta: &delta };
    let mut worst_q = 0.0f64;
    for a in 0..6 {
        for b in a + 1..6 {
            let want = delta[a] * q.h().at(a, b) * delta[b];
            worst_q = worst_q.max((shapley_interaction_exact(&coalition, a, b)? - want).abs());
        }
    }
    Ok(check(
        "shapley-axioms",
        worst_eff < 1e-10 && worst_q < 1e-10,
        format!("efficiency error {worst_eff:.1e}, quadratic interaction error {worst_q:.1e}"),
    ))
}

fn interaction_prediction() -> Result<PropertyCheck> {
    let mut ratios = Vec::new();
    for mu in [0.5, 1.0] {
        for m in [3, 5] {
            let s = coefficients(m, mu)?;
            ratios.extend(decay_ratios(|eta| {
                let game = symmetric_game(6, eta, 20 + m as u64)?;
                let delta = predicted_delta(&s, 1.0, &game)?;
                let exact = mean_interaction_exact(&QuadraticCoalition { game: &game, delta: &delta })?;
                let p = predicted_interaction(&s, 1.0, &game)?.value;
                Ok(((p - exact) / exact).abs())
            })?);
        }
    }
    let ok = ratios.iter().all(|r| (100.0 / 3.0..=300.0).contains(r));
    Ok(check(
        "interaction-prediction",
        ok,
        format!("relative error drop per 10× curvature: {}", fmt_range(&ratios)),
    ))
}

/// Loss whose input gradient has the same magnitude `c` everywhere.
struct Ramp {
    signs: Vec<f64>,
    c: f64,
}

impl Objective for Ramp {
    fn dim(&self) -> usize {
        self.signs.len()
    }

    fn loss_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let loss = x.iter().zip(&self.signs).map(|(v, s)| self.c * s * v).sum();
        Ok((loss, self.signs.iter().map(|s| self.c * s).collect()))
    }
}

fn sign_scale_equivalence() -> Result<PropertyCheck> {
    let image = ImageShape::new(4, 4, 1)?;
    let mut rng = SeededRng::new(5, 6);
    let signs: Vec<f64> = (0..16).map(|_| if rng.bernoulli(0.5) { 1.0 } else { -1.0 }).collect();
    let x: Vec<f64> = (0..16).map(|_| rng.uniform_range(20.0, 235.0)).collect();
    let (c, gamma) = (0.03, 20.0);
    let objective = Ramp { signs, c };
    let mut worst = 0.0f64;
    let run = |rule: StepRule| {
        let mut trace = Vec::new();
        let cfg = AttackConfig::new(100.0, 10, rule);
        crate::attacks::attack_loop(&objective, &x, image, &cfg, None, &mut SeededRng::new(0, 0), |r| {
            trace.push(r.iterate.to_vec())
        })
        .map(|_| trace)
    };
    let a = run(StepRule::Sign { alpha: gamma * c })?;
    let b = run(StepRule::FixedScale { gamma })?;
    for (u, v) in a.iter().zip(&b) {
        worst = worst.max(u.iter().zip(v).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max));
    }
    Ok(check(
        "sign-scale-equivalence",
        a.len() == 10 && b.len() == 10 && worst <= 1e-9,
        format!("max trajectory gap {worst:.1e} over 10 steps"),
    ))
}

fn budget_safety(runs: u64) -> Result<PropertyCheck> {
    let image = ImageShape::new(4, 4, 1)?;
    let model = DifferentiableModel::init(ModelSpec::Mlp { hidden: 5 }, image, 3, &mut SeededRng::new(0, 7))?;
    let models: [&dyn Classifier; 1] = [&model];
    let mut violations = 0usize;
    for k in 0..runs {
        let mut rng = SeededRng::new(k, 8);
        let method = Method::ALL[rng.below(Method::ALL.len())];
        let eps = rng.uniform_range(0.0, 32.0);
        let steps = 1 + rng.below(6);
        let gamma = 10f64.powf(rng.uniform_range(-1.0, 5.0));
        let x: Vec<f64> = (0..16).map(|_| rng.uniform_range(0.0, 255.0)).collect();
        let r = run_attack(&models, &models, &x, image, rng.below(3), &method.config(eps, steps, gamma), &mut rng)?;
        let d: Vec<f64> = r.adversarial.iter().zip(&x).map(|(a, b)| a - b).collect();
        if norm_linf(&d) > eps + 1e-9 || r.adversarial.iter().any(|v| !(0.0..=255.0).contains(v)) {
            violations += 1;
        }
    }
    Ok(check(
        "budget-safety",
        violations == 0,
        format!("{violations} violations in {runs} fuzzed attacks"),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quick_checks_pass() {
        for c in verify_properties(true).unwrap() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
