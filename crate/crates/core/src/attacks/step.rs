use super::StepRule;
use crate::error::{Error, Result};
use crate::numerics::sign;

/// One update along `direction` under `rule`. Adaptive rules take their γ_t
/// from `gamma_override`; for the other rules an override replaces α or γ.
pub fn apply_step(x_adv: &[f64], direction: &[f64], rule: &StepRule, gamma_override: Option<f64>) -> Result<Vec<f64>> {
    if x_adv.len() != direction.len() {
        return Err(Error::Shape {
            expected: vec![x_adv.len()],
            actual: vec![direction.len()],
        });
    }
    let out = match (rule, gamma_override) {
        (StepRule::Sign { alpha }, o) => {
            let a = o.unwrap_or(*alpha);
            x_adv.iter().zip(direction).map(|(x, d)| x + a * sign(*d)).collect()
        }
        (StepRule::FixedScale { gamma }, o) => {
            let g = o.unwrap_or(*gamma);
            x_adv.iter().zip(direction).map(|(x, d)| x + g * d).collect()
        }
        (StepRule::Adaptive { .. }, Some(g)) => x_adv.iter().zip(direction).map(|(x, d)| x + g * d).collect(),
        (StepRule::Adaptive { .. }, None) => {
            return Err(Error::config("adaptive step rule needs a per-step scaling factor"))
        }
    };
    Ok(out)
}

/// Clamp to `[x_orig - ε, x_orig + ε] ∩ [0, 255]`.
pub fn project(x_adv: &[f64], x_orig: &[f64], epsilon: f64) -> Vec<f64> {
    project_within(x_adv, x_orig, epsilon, [0.0, 255.0])
}

/// Clamp to `[x_orig - ε, x_orig + ε] ∩ [lo, hi]`.
pub fn project_within(x_adv: &[f64], x_orig: &[f64], epsilon: f64, [lo, hi]: [f64; 2]) -> Vec<f64> {
    x_adv
        .iter()
        .zip(x_orig)
        .map(|(&a, &o)| a.clamp(o - epsilon, o + epsilon).clamp(lo, hi))
        .collect()
}
