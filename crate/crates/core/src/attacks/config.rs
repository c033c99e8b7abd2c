use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a direction turns into a pixel update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum StepRule {
    /// `x + α·sign(d)`, α on the 0–255 scale.
    Sign { alpha: f64 },
    /// `x + γ·d`.
    FixedScale { gamma: f64 },
    /// `x + γ_t·d` with γ_t produced per step by a generator. `generator`
    /// names the checkpoint the harness loads.
    Adaptive {
        #[serde(default)]
        generator: Option<String>,
    },
}

impl StepRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StepRule::Sign { alpha } if !(alpha > 0.0) => {
                Err(Error::config(format!("sign step size must be positive, got {alpha}")))
            }
            StepRule::FixedScale { gamma } if !(gamma > 0.0) => {
                Err(Error::config(format!("scaling factor must be positive, got {gamma}")))
            }
            _ => Ok(()),
        }
    }
}

/// Gradient transforms, composed in list order: each entry wraps the
/// gradient estimator built from the entries before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Transform {
    /// Random resize to `[⌈min_scale·H⌉, H]` and zero-pad back, with
    /// probability `p`.
    Dim {
        p: f64,
        #[serde(default = "default_dim_min_scale")]
        min_scale: f64,
    },
    /// Gaussian smoothing of the gradient; σ defaults to `k / 3`.
    Tim {
        k: usize,
        #[serde(default)]
        sigma: Option<f64>,
    },
    /// Average over `m` copies scaled by `1 / 2^i`.
    Sim { m: usize },
    /// Variance tuning with `n` neighbours drawn uniformly from the
    /// `β·ε` box.
    Vt { n: usize, beta: f64 },
    /// Enhanced momentum: mean gradient over `n` points along the previous
    /// averaged gradient, offsets `c·η` with `c ~ U[-1, 1]`.
    Emi { n: usize, eta: f64 },
}

fn default_dim_min_scale() -> f64 {
    0.9
}

impl Transform {
    pub fn is_stateful(&self) -> bool {
        matches!(self, Transform::Vt { .. } | Transform::Emi { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Transform::Dim { p, min_scale } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::config(format!("DIM probability {p} outside [0, 1]")));
                }
                if !(min_scale > 0.0 && min_scale <= 1.0) {
                    return Err(Error::config(format!("DIM min scale {min_scale} outside (0, 1]")));
                }
            }
            Transform::Tim { k, sigma } => {
                if k % 2 == 0 {
                    return Err(Error::config(format!("TIM kernel size must be odd, got {k}")));
                }
                if matches!(sigma, Some(s) if !(s > 0.0)) {
                    return Err(Error::config("TIM sigma must be positive"));
                }
            }
            Transform::Sim { m } if m < 1 => return Err(Error::config("SIM needs m ≥ 1")),
            Transform::Vt { n, beta } if n < 1 || !(beta >= 0.0) => {
                return Err(Error::config("VT needs n ≥ 1 and beta ≥ 0"))
            }
            Transform::Emi { n, eta } if n < 1 || !(eta >= 0.0) => {
                return Err(Error::config("EMI needs n ≥ 1 and eta ≥ 0"))
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// L∞ budget on the 0–255 scale.
    pub epsilon: f64,
    pub steps: usize,
    /// Decay of the L1-normalized momentum accumulator. `None` steps along
    /// the raw (transformed) gradient.
    #[serde(default)]
    pub momentum: Option<f64>,
    pub step_rule: StepRule,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    #[serde(default)]
    pub targeted: bool,
    #[serde(default)]
    pub target_label: Option<usize>,
    #[serde(default = "default_pixel_bounds")]
    pub pixel_bounds: [f64; 2],
}

fn default_pixel_bounds() -> [f64; 2] {
    [0.0, 255.0]
}

impl AttackConfig {
    pub fn new(epsilon: f64, steps: usize, step_rule: StepRule) -> Self {
        Self {
            epsilon,
            steps,
            momentum: None,
            step_rule,
            transforms: Vec::new(),
            targeted: false,
            target_label: None,
            pixel_bounds: default_pixel_bounds(),
        }
    }

    pub fn with_momentum(mut self, mu: f64) -> Self {
        self.momentum = Some(mu);
        self
    }

    pub fn with_transform(mut self, t: Transform) -> Self {
        self.transforms.push(t);
        self
    }

    pub fn targeted_at(mut self, label: usize) -> Self {
        self.targeted = true;
        self.target_label = Some(label);
        self
    }

    /// Checks everything that does not depend on the example.
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) {
            return Err(Error::config(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if matches!(self.momentum, Some(mu) if !(mu >= 0.0)) {
            return Err(Error::config("momentum decay must be ≥ 0"));
        }
        let [lo, hi] = self.pixel_bounds;
        if !(lo < hi) {
            return Err(Error::config("pixel bounds must satisfy lo < hi"));
        }
        if self.targeted && self.target_label.is_none() {
            return Err(Error::config("targeted attack without a target label"));
        }
        self.step_rule.validate()?;
        let mut stateful_seen = false;
        for t in &self.transforms {
            t.validate()?;
            if t.is_stateful() {
                if stateful_seen {
                    return Err(Error::config("at most one of VT / EMI per pipeline"));
                }
                stateful_seen = true;
            } else if stateful_seen && !matches!(t, Transform::Tim { .. }) {
                // DIM/SIM around VT/EMI would call the stateful estimator
                // several times per step.
                return Err(Error::config("only TIM may follow VT or EMI in the transform list"));
            }
        }
        Ok(())
    }

    /// Checks against a concrete true label.
    pub fn validate_for(&self, label: usize, num_classes: usize) -> Result<()> {
        self.validate()?;
        if let Some(t) = self.target_label.filter(|_| self.targeted) {
            if t == label {
                return Err(Error::config("target label equals the true label"));
            }
            if t >= num_classes {
                return Err(Error::config(format!("target label {t} out of range")));
            }
        }
        Ok(())
    }
}

/// Named attack recipes used by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fgsm,
    Bim,
    Mifgsm,
    /// BIM-style scaled step on the raw gradient.
    ApaaF,
    /// Momentum with L1 normalization and a scaled step.
    MifgsmApaaF,
    Dim,
    DimApaaF,
    Tim,
    TimApaaF,
    Sim,
    SimApaaF,
    Vt,
    VtApaaF,
    Emi,
    EmiApaaF,
}

impl Method {
    pub const ALL: [Method; 15] = [
        Method::Fgsm,
        Method::Bim,
        Method::Mifgsm,
        Method::ApaaF,
        Method::MifgsmApaaF,
        Method::Dim,
        Method::DimApaaF,
        Method::Tim,
        Method::TimApaaF,
        Method::Sim,
        Method::SimApaaF,
        Method::Vt,
        Method::VtApaaF,
        Method::Emi,
        Method::EmiApaaF,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Fgsm => "fgsm",
            Method::Bim => "bim",
            Method::Mifgsm => "mifgsm",
            Method::ApaaF => "apaa-f",
            Method::MifgsmApaaF => "mifgsm-apaa-f",
            Method::Dim => "dim",
            Method::DimApaaF => "dim-apaa-f",
            Method::Tim => "tim",
            Method::TimApaaF => "tim-apaa-f",
            Method::Sim => "sim",
            Method::SimApaaF => "sim-apaa-f",
            Method::Vt => "vt",
            Method::VtApaaF => "vt-apaa-f",
            Method::Emi => "emi",
            Method::EmiApaaF => "emi-apaa-f",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::config(format!("unknown attack method {s:?}")))
    }

    pub fn is_scaled(&self) -> bool {
        self.name().ends_with("apaa-f")
    }

    /// Recipe with the baseline hyperparameters (μ = 1, p = 0.7, TIM k = 3,
    /// SIM m = 2, VT N = 20 β = 1.5, EMI N = 11 η = 7). Sign steps use
    /// `α = ε / T`; scaled steps use `gamma`. Every method except FGSM, BIM
    /// and plain scaled steps carries MIFGSM momentum.
    pub fn config(&self, epsilon: f64, steps: usize, gamma: f64) -> AttackConfig {
        let sign = StepRule::Sign {
            alpha: (epsilon / steps.max(1) as f64).max(f64::MIN_POSITIVE),
        };
        let scaled = StepRule::FixedScale { gamma };
        let rule = if self.is_scaled() { scaled } else { sign };
        let base = AttackConfig::new(epsilon, steps, rule);
        match self {
            Method::Fgsm => AttackConfig::new(epsilon, 1, StepRule::Sign { alpha: epsilon.max(f64::MIN_POSITIVE) }),
            Method::Bim | Method::ApaaF => base,
            Method::Mifgsm | Method::MifgsmApaaF => base.with_momentum(1.0),
            Method::Dim | Method::DimApaaF => base
                .with_momentum(1.0)
                .with_transform(Transform::Dim { p: 0.7, min_scale: 0.9 }),
            Method::Tim | Method::TimApaaF => base
                .with_momentum(1.0)
                .with_transform(Transform::Tim { k: 3, sigma: None }),
            Method::Sim | Method::SimApaaF => base
                .with_momentum(1.0)
                .with_transform(Transform::Sim { m: 2 }),
            Method::Vt | Method::VtApaaF => base
                .with_momentum(1.0)
                .with_transform(Transform::Vt { n: 20, beta: 1.5 }),
            Method::Emi | Method::EmiApaaF => base
                .with_momentum(1.0)
                .with_transform(Transform::Emi { n: 11, eta: 7.0 }),
        }
    }
}

/// Outcome of one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub adversarial: Vec<f64>,
    /// α (sign rule) or γ_t (scaled rules) used at each executed step.
    pub step_sizes: Vec<f64>,
    /// One flag per target model: misclassified (untargeted) or classified
    /// as the target label (targeted).
    pub success: Vec<bool>,
    /// Mean source-model cross-entropy w.r.t. the true label (untargeted) or
    /// the target label (targeted) at the returned example.
    pub final_loss: f64,
    pub steps_used: usize,
    /// The loop stopped early on an all-zero gradient.
    pub degenerate: bool,
}
