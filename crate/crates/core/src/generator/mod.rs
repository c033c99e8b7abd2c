//! Adaptive scaling-factor generator: one small network per attack step
//! mapping `(x_adv, grad)` to a positive γ_t, its training loop and the
//! adaptive attack.

mod net;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attacks::ScaleProvider;
use crate::error::{Error, Result};
use crate::models::{standardize, Checkpoint};
use crate::numerics::{norm_linf, sigmoid, softplus, ImageShape, SeededRng};

pub use net::GeneratorArch;
pub use train::{run_attack_adaptive, train_generator, GeneratorOptimizer, GeneratorTrainConfig};

/// T per-step networks of identical architecture and independent
/// parameters; γ_t = s·softplus(raw_t).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFactorGenerator {
    arch: GeneratorArch,
    image: ImageShape,
    head_scale: f64,
    params: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GeneratorHeader {
    arch: GeneratorArch,
    image_shape: ImageShape,
    steps: usize,
    head_scale: f64,
}

impl ScalingFactorGenerator {
    /// Glorot-uniform weights and zero biases, each step drawn from its own
    /// stream of `rng`.
    pub fn init(arch: GeneratorArch, image: ImageShape, steps: usize, head_scale: f64, rng: &SeededRng) -> Result<Self> {
        Self::check(arch, image, steps, head_scale)?;
        let params = (0..steps).map(|t| net::init(arch, image, &mut rng.fork(t as u64))).collect();
        Ok(Self {
            arch,
            image,
            head_scale,
            params,
        })
    }

    /// All-zero parameters with `s = gamma / ln 2`, so every step outputs γ.
    pub fn constant(arch: GeneratorArch, image: ImageShape, steps: usize, gamma: f64) -> Result<Self> {
        let head_scale = gamma / std::f64::consts::LN_2;
        Self::check(arch, image, steps, head_scale)?;
        let n = net::param_count(arch, image);
        Ok(Self {
            arch,
            image,
            head_scale,
            params: vec![vec![0.0; n]; steps],
        })
    }

    fn check(arch: GeneratorArch, image: ImageShape, steps: usize, head_scale: f64) -> Result<()> {
        if steps < 1 {
            return Err(Error::config("generator needs at least one step"));
        }
        if !(head_scale > 0.0 && head_scale.is_finite()) {
            return Err(Error::config(format!("head scale must be positive, got {head_scale}")));
        }
        match arch {
            GeneratorArch::Mlp { hidden1, hidden2 } if hidden1 == 0 || hidden2 == 0 => {
                Err(Error::config("generator hidden widths must be positive"))
            }
            GeneratorArch::Conv { channels, hidden } if channels == 0 || hidden == 0 => {
                Err(Error::config("generator widths must be positive"))
            }
            GeneratorArch::Conv { .. } if image.height.min(image.width) < 8 => Err(Error::config(
                "convolutional generator needs images of side ≥ 8; use the MLP form",
            )),
            _ => Ok(()),
        }
    }

    pub fn arch(&self) -> GeneratorArch {
        self.arch
    }

    pub fn image(&self) -> ImageShape {
        self.image
    }

    pub fn steps(&self) -> usize {
        self.params.len()
    }

    pub fn head_scale(&self) -> f64 {
        self.head_scale
    }

    pub fn params(&self, t: usize) -> &[f64] {
        &self.params[t]
    }

    pub fn params_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.params[t]
    }

    /// Network input: standardized pixels and the gradient divided by its
    /// max-abs, interleaved per pixel (conv form) or concatenated (MLP form).
    fn features(&self, x_adv: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
        let d = self.image.len();
        if x_adv.len() != d || grad.len() != d {
            return Err(Error::arg(format!(
                "generator expects two inputs of length {d}, got {} and {}",
                x_adv.len(),
                grad.len()
            )));
        }
        let m = norm_linf(grad);
        let g = |v: f64| if m > 0.0 { v / m } else { 0.0 };
        Ok(match self.arch {
            GeneratorArch::Mlp { .. } => x_adv
                .iter()
                .map(|&v| standardize(v))
                .chain(grad.iter().map(|&v| g(v)))
                .collect(),
            GeneratorArch::Conv { .. } => {
                let c = self.image.channels;
                let mut out = Vec::with_capacity(2 * d);
                for (px, pg) in x_adv.chunks(c).zip(grad.chunks(c)) {
                    out.extend(px.iter().map(|&v| standardize(v)));
                    out.extend(pg.iter().map(|&v| g(v)));
                }
                out
            }
        })
    }

    fn step_index(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::arg(format!("step {t} out of range for a {}-step generator", self.steps())));
        }
        Ok(())
    }

    /// γ_t = s·softplus(G_t(x_adv, grad)), always > 0.
    pub fn gamma_forward(&self, t: usize, x_adv: &[f64], grad: &[f64]) -> Result<f64> {
        self.step_index(t)?;
        let f = self.features(x_adv, grad)?;
        let raw = net::forward(self.arch, self.image, &self.params[t], &f).raw;
        Ok(self.head_scale * softplus(raw))
    }

    /// `upstream · ∂γ_t/∂θ_t` as a flat vector in parameter order.
    pub fn gamma_parameter_gradient(&self, t: usize, x_adv: &[f64], grad: &[f64], upstream: f64) -> Result<Vec<f64>> {
        Ok(self.gamma_and_parameter_gradient(t, x_adv, grad, upstream)?.1)
    }

    pub(crate) fn gamma_and_parameter_gradient(
        &self,
        t: usize,
        x_adv: &[f64],
        grad: &[f64],
        upstream: f64,
    ) -> Result<(f64, Vec<f64>)> {
        self.step_index(t)?;
        let f = self.features(x_adv, grad)?;
        let p = &self.params[t];
        let cache = net::forward(self.arch, self.image, p, &f);
        let gamma = self.head_scale * softplus(cache.raw);
        let draw = upstream * self.head_scale * sigmoid(cache.raw);
        Ok((gamma, net::backward(self.arch, self.image, p, &cache, draw)))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let header = GeneratorHeader {
            arch: self.arch,
            image_shape: self.image,
            steps: self.steps(),
            head_scale: self.head_scale,
        };
        let lay = net::layout(self.arch, self.image);
        let mut sections = Vec::new();
        for (t, p) in self.params.iter().enumerate() {
            let step_lay: Vec<_> = lay.iter().map(|(n, s)| (format!("step{t}.{n}"), s.clone())).collect();
            sections.extend(Checkpoint::sections_from(&step_lay, p));
        }
        Checkpoint::new(
            "generator",
            serde_json::to_value(header).expect("header serializes"),
            sections,
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("generator")?;
        let h: GeneratorHeader = serde_json::from_value(ck.header.clone())?;
        Self::check(h.arch, h.image_shape, h.steps, h.head_scale).map_err(|e| Error::format(0, e.to_string()))?;
        let lay = net::layout(h.arch, h.image_shape);
        if ck.sections.len() != lay.len() * h.steps {
            return Err(Error::format(
                0,
                format!("expected {} sections, found {}", lay.len() * h.steps, ck.sections.len()),
            ));
        }
        let params = ck
            .sections
            .chunks(lay.len())
            .enumerate()
            .map(|(t, chunk)| {
                let step_lay: Vec<_> = lay.iter().map(|(n, s)| (format!("step{t}.{n}"), s.clone())).collect();
                Checkpoint::params_from(chunk, &step_lay)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            arch: h.arch,
            image: h.image_shape,
            head_scale: h.head_scale,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl ScaleProvider for &ScalingFactorGenerator {
    fn gamma(&mut self, step: usize, x_adv: &[f64], direction: &[f64]) -> Result<f64> {
        self.gamma_forward(step, x_adv, direction)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_gradient, relative_error};

    fn img(side: usize, c: usize) -> ImageShape {
        ImageShape::new(side, side, c).unwrap()
    }

    fn small_mlp() -> GeneratorArch {
        GeneratorArch::Mlp { hidden1: 6, hidden2: 4 }
    }

    fn random_inputs(d: usize, rng: &mut SeededRng) -> (Vec<f64>, Vec<f64>) {
        let x = (0..d).map(|_| rng.uniform_range(0.0, 255.0)).collect();
        let g = (0..d).map(|_| rng.normal() * 1e-3).collect();
        (x, g)
    }

    #[test]
    fn zero_parameters_give_s_ln2() {
        let image = img(3, 1);
        let mut g = ScalingFactorGenerator::init(small_mlp(), image, 2, 4.0, &SeededRng::new(0, 0)).unwrap();
        g.params_mut(1).iter_mut().for_each(|p| *p = 0.0);
        let mut rng = SeededRng::new(1, 0);
        let (x, d) = random_inputs(9, &mut rng);
        assert!((g.gamma_forward(1, &x, &d).unwrap() - 4.0 * std::f64::consts::LN_2).abs() < 1e-15);
        let c = ScalingFactorGenerator::constant(GeneratorArch::CONV, img(8, 1), 1, 8.0).unwrap();
        let (x, d) = random_inputs(64, &mut rng);
        assert!((c.gamma_forward(0, &x, &d).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn output_is_positive() {
        let image = img(3, 1);
        let mut rng = SeededRng::new(2, 0);
        let mut g = ScalingFactorGenerator::init(small_mlp(), image, 1, 1.0, &rng).unwrap();
        g.params_mut(0).iter_mut().for_each(|p| *p *= 30.0);
        for _ in 0..10_000 {
            let (x, d) = random_inputs(9, &mut rng);
            let gamma = g.gamma_forward(0, &x, &d).unwrap();
            assert!(gamma > 0.0 && gamma.is_finite());
        }
    }

    #[test]
    fn shape_errors() {
        let g = ScalingFactorGenerator::init(small_mlp(), img(3, 1), 2, 1.0, &SeededRng::new(0, 0)).unwrap();
        assert!(g.gamma_forward(0, &[0.0; 9], &[0.0; 8]).is_err());
        assert!(g.gamma_forward(2, &[0.0; 9], &[0.0; 9]).is_err());
        assert!(ScalingFactorGenerator::init(GeneratorArch::CONV, img(4, 1), 1, 1.0, &SeededRng::new(0, 0)).is_err());
        assert!(ScalingFactorGenerator::init(small_mlp(), img(3, 1), 0, 1.0, &SeededRng::new(0, 0)).is_err());
    }

    #[test]
    fn steps_are_independent() {
        let g = ScalingFactorGenerator::init(small_mlp(), img(3, 1), 3, 1.0, &SeededRng::new(0, 0)).unwrap();
        assert_ne!(g.params(0), g.params(1));
        assert_ne!(g.params(1), g.params(2));
    }

    fn fd_check(arch: GeneratorArch, image: ImageShape, draws: u64) {
        for seed in 0..draws {
            let rng = SeededRng::new(seed, 0);
            let mut g = ScalingFactorGenerator::init(arch, image, 1, 2.5, &rng).unwrap();
            let mut r = rng.fork(99);
            g.params_mut(0).iter_mut().for_each(|p| *p += 0.05 * r.normal());
            let (x, d) = random_inputs(image.len(), &mut r);
            let upstream = 0.7;
            let analytic = g.gamma_parameter_gradient(0, &x, &d, upstream).unwrap();
            let theta = g.params(0).to_vec();
            let fd = finite_diff_gradient(
                |p| {
                    let mut h = g.clone();
                    h.params_mut(0).copy_from_slice(p);
                    upstream * h.gamma_forward(0, &x, &d).unwrap()
                },
                &theta,
                1e-6,
            )
            .unwrap();
            let err = relative_error(&analytic, &fd);
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        fd_check(small_mlp(), img(3, 2), 50);
    }

    #[test]
    fn conv_gradient_matches_finite_differences() {
        let arch = GeneratorArch::Conv { channels: 3, hidden: 4 };
        fd_check(arch, img(8, 1), 10);
        fd_check(arch, ImageShape::new(9, 10, 2).unwrap(), 5);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let g = ScalingFactorGenerator::init(small_mlp(), img(3, 1), 1, 1.0, &SeededRng::new(0, 0)).unwrap();
        let grad = g.gamma_parameter_gradient(0, &[10.0; 9], &[1.0; 9], 0.0).unwrap();
        assert!(grad.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_head_closed_form() {
        let image = img(2, 1);
        let g = ScalingFactorGenerator::init(small_mlp(), image, 1, 3.0, &SeededRng::new(4, 0)).unwrap();
        let x = [10.0, 20.0, 200.0, 0.0];
        let d = [0.1, -0.2, 0.4, 0.0];
        let upstream = -1.3;
        let grad = g.gamma_parameter_gradient(0, &x, &d, upstream).unwrap();
        let f = g.features(&x, &d).unwrap();
        let cache = net::forward(g.arch, image, g.params(0), &f);
        let h2 = &cache.hidden[1];
        let factor = sigmoid(cache.raw) * 3.0 * upstream;
        let n = grad.len();
        let w3 = &grad[n - 1 - h2.len()..n - 1];
        for (gw, h) in w3.iter().zip(h2) {
            assert!((gw - h * factor).abs() < 1e-14);
        }
        assert!((grad[n - 1] - factor).abs() < 1e-14);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for (arch, image) in [(small_mlp(), img(3, 2)), (GeneratorArch::Conv { channels: 2, hidden: 3 }, img(8, 1))] {
            let g = ScalingFactorGenerator::init(arch, image, 3, 1.7, &SeededRng::new(5, 0)).unwrap();
            let path = dir.path().join("gen.json");
            g.save(&path).unwrap();
            assert_eq!(ScalingFactorGenerator::load(&path).unwrap(), g);
        }
        let m = crate::models::DifferentiableModel::zeros(crate::models::ModelSpec::SoftmaxLinear, img(2, 1), 2).unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert!(matches!(ScalingFactorGenerator::load(&path), Err(Error::Format { .. })));
    }
}
