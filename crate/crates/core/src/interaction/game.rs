use serde::{Deserialize, Serialize};

use super::CoefficientSchedule;
use crate::error::{Error, Result};
use crate::numerics::{dot, Tensor};

const SYMMETRY_TOL: f64 = 1e-12;

/// Second-order model of a loss around `x0`:
/// `L(x0 + δ) = L(x0) + δ·g + ½ δHδᵀ`, row-vector convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticGame {
    g: Vec<f64>,
    h: Tensor,
    x0: Vec<f64>,
}

impl AnalyticGame {
    pub fn new(g: Vec<f64>, h: Tensor, x0: Vec<f64>) -> Result<Self> {
        let n = g.len();
        if h.shape() != [n, n] || x0.len() != n {
            return Err(Error::Shape {
                expected: vec![n, n],
                actual: h.shape().to_vec(),
            });
        }
        Ok(Self { g, h, x0 })
    }

    /// Game at the origin.
    pub fn at_origin(g: Vec<f64>, h: Tensor) -> Result<Self> {
        let n = g.len();
        Self::new(g, h, vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn h(&self) -> &Tensor {
        &self.h
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn is_symmetric(&self) -> bool {
        self.h.asymmetry() <= SYMMETRY_TOL
    }

    fn require_symmetric(&self) -> Result<()> {
        if !self.is_symmetric() {
            return Err(Error::arg(format!(
                "H must be symmetric (max asymmetry {:.3e})",
                self.h.asymmetry()
            )));
        }
        Ok(())
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Shape {
                expected: vec![self.dim()],
                actual: vec![v.len()],
            });
        }
        Ok(())
    }

    /// `∇L(x0 + δ) = g + δH`.
    pub fn gradient_at(&self, delta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(delta)?;
        let dh = self.h.vecmat(delta);
        Ok(self.g.iter().zip(dh).map(|(a, b)| a + b).collect())
    }

    /// `δ·g + ½ δHδᵀ`.
    pub fn value(&self, delta: &[f64]) -> Result<f64> {
        self.check_len(delta)?;
        let dh = self.h.vecmat(delta);
        Ok(dot(delta, &self.g) + 0.5 * dot(&dh, delta))
    }

    /// `gH`.
    pub fn gh(&self) -> Vec<f64> {
        self.h.vecmat(&self.g)
    }
}

/// Unnormalized, unclipped momentum with a scaled step, run for `m` steps:
/// `g_t = μ·g_{t−1} + ∇L(x0 + δ_{t−1})`, `δ_t = δ_{t−1} + γ·g_t`.
/// Returns `(g_m, δ_m)`.
pub fn simulate_raw(game: &AnalyticGame, mu: f64, gamma: f64, m: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if m < 1 {
        return Err(Error::arg("simulation needs m ≥ 1"));
    }
    let n = game.dim();
    let mut g = vec![0.0; n];
    let mut delta = vec![0.0; n];
    for _ in 0..m {
        let grad = game.gradient_at(&delta)?;
        for ((gi, di), gr) in g.iter_mut().zip(delta.iter_mut()).zip(grad) {
            *gi = mu * *gi + gr;
            *di += gamma * *gi;
        }
    }
    Ok((g, delta))
}

/// `c_m·γ·g + d_m·γ²·gH`.
pub fn predicted_delta(schedule: &CoefficientSchedule, gamma: f64, game: &AnalyticGame) -> Result<Vec<f64>> {
    game.require_symmetric()?;
    if schedule.m < 1 {
        return Err(Error::arg("coefficient schedules start at m = 1"));
    }
    let gh = game.gh();
    Ok(game
        .g
        .iter()
        .zip(gh)
        .map(|(g, q)| schedule.c * gamma * g + schedule.d * gamma * gamma * q)
        .collect())
}

/// Second-order prediction of the mean pairwise interaction inside `δ_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedInteraction {
    /// `A·γ² + 2B·γ³`.
    pub value: f64,
    pub a: f64,
    pub b: f64,
}

impl PredictedInteraction {
    pub fn at(&self, gamma: f64) -> f64 {
        self.a * gamma * gamma + 2.0 * self.b * gamma.powi(3)
    }
}

/// `A = mean c²·g_a g_b H_ab`, `B = mean c·d·g_a H_ab (gH)_b`, means over
/// unordered pairs `a ≠ b` (for `B` the pair mean is taken over both
/// orientations, which the unordered mean requires for a symmetric result).
pub fn predicted_interaction(
    schedule: &CoefficientSchedule,
    gamma: f64,
    game: &AnalyticGame,
) -> Result<PredictedInteraction> {
    game.require_symmetric()?;
    let n = game.dim();
    if n < 2 {
        return Err(Error::arg("interaction needs at least two players"));
    }
    let g = &game.g;
    let gh = game.gh();
    let (c, d) = (schedule.c, schedule.d);
    let mut sa = 0.0;
    let mut sb = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let hab = game.h.at(a, b);
            sa += g[a] * g[b] * hab;
            sb += 0.5 * hab * (g[a] * gh[b] + gh[a] * g[b]);
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let a = c * c * sa / pairs;
    let b = c * d * sb / pairs;
    let out = PredictedInteraction { value: 0.0, a, b };
    Ok(PredictedInteraction {
        value: out.at(gamma),
        ..out
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::coefficients;
    use crate::numerics::{norm_l2, SeededRng};

    pub(crate) fn random_game(n: usize, eta: f64, seed: u64) -> AnalyticGame {
        let mut rng = SeededRng::new(seed, 0);
        let g: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in i..n {
                let v = rng.normal();
                rows[i][j] = v;
                rows[j][i] = v;
            }
        }
        let h = Tensor::matrix(&rows).unwrap();
        let scale = eta / h.norm();
        AnalyticGame::at_origin(g, h.scale(scale)).unwrap()
    }

    #[test]
    fn one_step_is_gamma_g() {
        let game = random_game(5, 0.3, 1);
        let (_, d) = simulate_raw(&game, 0.7, 2.0, 1).unwrap();
        let want: Vec<f64> = game.g().iter().map(|v| 2.0 * v).collect();
        assert_eq!(d, want);
    }

    #[test]
    fn zero_curvature_is_arithmetic_series() {
        let g = vec![1.0, -2.0, 0.5];
        let game = AnalyticGame::at_origin(g.clone(), Tensor::zeros(vec![3, 3])).unwrap();
        for m in 1..12 {
            let (_, d) = simulate_raw(&game, 1.0, 0.25, m).unwrap();
            let k = (m * (m + 1) / 2) as f64;
            assert_eq!(coefficients(m, 1.0).unwrap().c, k);
            for (di, gi) in d.iter().zip(&g) {
                assert_eq!(*di, k * 0.25 * gi);
            }
        }
    }

    #[test]
    fn predicted_delta_trivial_cases() {
        let game = random_game(4, 0.1, 2);
        let s = coefficients(5, 1.0).unwrap();
        assert!(predicted_delta(&s, 0.0, &game).unwrap().iter().all(|v| *v == 0.0));
        let flat = AnalyticGame::at_origin(game.g().to_vec(), Tensor::zeros(vec![4, 4])).unwrap();
        let p = predicted_delta(&s, 1.5, &flat).unwrap();
        for (pi, gi) in p.iter().zip(game.g()) {
            assert!((pi - s.c * 1.5 * gi).abs() < 1e-15);
        }
        let asym = Tensor::matrix(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let bad = AnalyticGame::at_origin(vec![1.0, 1.0], asym).unwrap();
        assert!(predicted_delta(&s, 1.0, &bad).is_err());
        assert!(predicted_interaction(&s, 1.0, &bad).is_err());
    }

    #[test]
    fn prediction_error_is_second_order() {
        let game = random_game(8, 1e-3, 3);
        let s = coefficients(5, 1.0).unwrap();
        let (_, sim) = simulate_raw(&game, 1.0, 1.0, 5).unwrap();
        let pred = predicted_delta(&s, 1.0, &game).unwrap();
        let diff: Vec<f64> = sim.iter().zip(&pred).map(|(a, b)| a - b).collect();
        assert!(norm_l2(&diff) < 1e-3 * norm_l2(&sim));
    }

    #[test]
    fn interaction_polynomial_identity() {
        let game = random_game(6, 0.2, 4);
        let s = coefficients(4, 0.5).unwrap();
        let p = predicted_interaction(&s, 1.3, &game).unwrap();
        let p2 = predicted_interaction(&s, 2.6, &game).unwrap();
        let want = 4.0 * p.a * 1.3f64.powi(2) + 16.0 * p.b * 1.3f64.powi(3);
        assert!((p2.value - want).abs() <= 1e-12 * want.abs().max(1.0));
        assert_eq!(predicted_interaction(&s, 0.0, &game).unwrap().value, 0.0);
        let flat = AnalyticGame::at_origin(game.g().to_vec(), Tensor::zeros(vec![6, 6])).unwrap();
        let z = predicted_interaction(&s, 2.0, &flat).unwrap();
        assert_eq!((z.value, z.a, z.b), (0.0, 0.0, 0.0));
    }
}
