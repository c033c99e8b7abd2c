//! Gradient transforms used by the transfer-attack baselines.

use crate::error::{Error, Result};
use crate::models::Classifier;
use crate::numerics::{gaussian_kernel_2d, norm_l1, norm_linf, ImageShape, SeededRng};

use super::objective::ensemble_gradient;

/// Gradient estimator threaded through the transforms.
pub(crate) type GradFn<'a> = dyn FnMut(&[f64], &mut SeededRng) -> Result<Vec<f64>> + 'a;

/// `μ·g_prev + grad / ‖grad‖₁`. An all-zero `grad` yields
/// [`Error::DegenerateGradient`] so the caller can stop early.
pub fn momentum_accumulate(g_prev: &[f64], grad: &[f64], mu: f64) -> Result<Vec<f64>> {
    if g_prev.len() != grad.len() {
        return Err(Error::Shape {
            expected: vec![g_prev.len()],
            actual: vec![grad.len()],
        });
    }
    let l1 = norm_l1(grad);
    if l1 == 0.0 {
        return Err(Error::DegenerateGradient);
    }
    Ok(g_prev.iter().zip(grad).map(|(p, g)| mu * p + g / l1).collect())
}

fn check_image(x: &[f64], shape: ImageShape) -> Result<()> {
    if x.len() != shape.len() {
        return Err(Error::arg(format!(
            "input of length {} is not a {}x{}x{} image",
            x.len(),
            shape.height,
            shape.width,
            shape.channels
        )));
    }
    Ok(())
}

/// One draw of the DIM input transform: nearest-neighbour downscale to
/// `rows × cols`, placed at `(top, left)` on a zero canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DimResize {
    pub shape: ImageShape,
    pub rows: usize,
    pub cols: usize,
    pub top: usize,
    pub left: usize,
}

impl DimResize {
    /// With probability `p` draws a resize; otherwise `None` (identity).
    /// Side lengths are drawn from `[⌈min_scale·H⌉, H]`; the width follows
    /// the height's ratio.
    pub fn sample(shape: ImageShape, p: f64, min_scale: f64, rng: &mut SeededRng) -> Option<Self> {
        if !rng.bernoulli(p) {
            return None;
        }
        let h = shape.height;
        let lo = ((min_scale * h as f64).ceil() as usize).clamp(1, h);
        let rows = lo + rng.below(h - lo + 1);
        let cols = ((rows as f64 * shape.width as f64 / h as f64).round() as usize).clamp(1, shape.width);
        let top = rng.below(h - rows + 1);
        let left = rng.below(shape.width - cols + 1);
        Some(Self {
            shape,
            rows,
            cols,
            top,
            left,
        })
    }

    /// Source pixel `(row, col)` feeding canvas position `(r, c)`, if any.
    fn source(&self, r: usize, c: usize) -> Option<(usize, usize)> {
        if r < self.top || r >= self.top + self.rows || c < self.left || c >= self.left + self.cols {
            return None;
        }
        let sr = (r - self.top) * self.shape.height / self.rows;
        let sc = (c - self.left) * self.shape.width / self.cols;
        Some((sr, sc))
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let s = self.shape;
        let mut out = vec![0.0; s.len()];
        for r in 0..s.height {
            for c in 0..s.width {
                if let Some((sr, sc)) = self.source(r, c) {
                    for ch in 0..s.channels {
                        out[s.index(r, c, ch)] = x[s.index(sr, sc, ch)];
                    }
                }
            }
        }
        out
    }

    /// Transpose of [`apply`](Self::apply): scatters a canvas gradient back
    /// onto the source pixels.
    pub fn backprop(&self, g: &[f64]) -> Vec<f64> {
        let s = self.shape;
        let mut out = vec![0.0; s.len()];
        for r in 0..s.height {
            for c in 0..s.width {
                if let Some((sr, sc)) = self.source(r, c) {
                    for ch in 0..s.channels {
                        out[s.index(sr, sc, ch)] += g[s.index(r, c, ch)];
                    }
                }
            }
        }
        out
    }
}

/// Random resize-and-pad with probability `p` (DIM), resize band `[90%, 100%]`.
pub fn dim_transform(x: &[f64], shape: ImageShape, p: f64, rng: &mut SeededRng) -> Result<Vec<f64>> {
    check_image(x, shape)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::arg(format!("probability {p} outside [0, 1]")));
    }
    Ok(match DimResize::sample(shape, p, 0.9, rng) {
        Some(d) => d.apply(x),
        None => x.to_vec(),
    })
}

/// Per-channel 2-D convolution with a normalized Gaussian kernel, same
/// output size, edge-replicated borders (TIM).
pub fn tim_smooth(grad: &[f64], shape: ImageShape, k: usize, sigma: f64) -> Result<Vec<f64>> {
    check_image(grad, shape)?;
    let kernel = gaussian_kernel_2d(k, sigma)?;
    if k == 1 {
        return Ok(grad.to_vec());
    }
    let r = (k / 2) as isize;
    let (h, w) = (shape.height as isize, shape.width as isize);
    let mut out = vec![0.0; grad.len()];
    for row in 0..h {
        for col in 0..w {
            for ch in 0..shape.channels {
                let mut acc = 0.0;
                for i in -r..=r {
                    let rr = (row + i).clamp(0, h - 1) as usize;
                    for j in -r..=r {
                        let cc = (col + j).clamp(0, w - 1) as usize;
                        acc += kernel.at((i + r) as usize, (j + r) as usize) * grad[shape.index(rr, cc, ch)];
                    }
                }
                out[shape.index(row as usize, col as usize, ch)] = acc;
            }
        }
    }
    Ok(out)
}

pub(crate) fn sim_with(inner: &mut GradFn<'_>, x: &[f64], m: usize, rng: &mut SeededRng) -> Result<Vec<f64>> {
    if m < 1 {
        return Err(Error::arg("SIM needs at least one copy"));
    }
    let mut acc = vec![0.0; x.len()];
    for i in 0..m {
        let s = 0.5f64.powi(i as i32);
        let scaled: Vec<f64> = x.iter().map(|v| v * s).collect();
        let g = inner(&scaled, rng)?;
        // d/dx J(f(s·x)) = s·∇J(s·x)
        crate::numerics::axpy(s / m as f64, &g, &mut acc);
    }
    Ok(acc)
}

/// `(1/m) Σ_i ∇ₓ J(f(x / 2^i), y)`, chain rule through the scaling included.
pub fn sim_gradient(models: &[&dyn Classifier], x: &[f64], y: usize, m: usize) -> Result<Vec<f64>> {
    let mut rng = SeededRng::new(0, 0);
    sim_with(&mut |v, _| ensemble_gradient(models, v, y), x, m, &mut rng)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn vt_with(
    inner: &mut GradFn<'_>,
    x: &[f64],
    prev_variance: &[f64],
    n: usize,
    beta: f64,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n < 1 || !(beta >= 0.0) {
        return Err(Error::arg("VT needs n ≥ 1 and beta ≥ 0"));
    }
    if prev_variance.len() != x.len() {
        return Err(Error::Shape {
            expected: vec![x.len()],
            actual: vec![prev_variance.len()],
        });
    }
    let current = inner(x, rng)?;
    let radius = beta * epsilon;
    let mut mean = vec![0.0; x.len()];
    for _ in 0..n {
        let probe: Vec<f64> = x.iter().map(|v| v + rng.uniform_range(-radius, radius)).collect();
        let g = inner(&probe, rng)?;
        crate::numerics::axpy(1.0 / n as f64, &g, &mut mean);
    }
    let tuned = current.iter().zip(prev_variance).map(|(c, v)| c + v).collect();
    let variance = mean.iter().zip(&current).map(|(m, c)| m - c).collect();
    Ok((tuned, variance))
}

/// Variance-tuned gradient: returns `(∇J(x) + v_prev, v_new)` where
/// `v_new = mean_N ∇J(x + r_i) - ∇J(x)`, `r_i ~ U[-βε, βε]^d`.
#[allow(clippy::too_many_arguments)]
pub fn vt_gradient(
    models: &[&dyn Classifier],
    x: &[f64],
    y: usize,
    prev_variance: &[f64],
    n: usize,
    beta: f64,
    epsilon: f64,
    rng: &mut SeededRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    vt_with(&mut |v, _| ensemble_gradient(models, v, y), x, prev_variance, n, beta, epsilon, rng)
}

pub(crate) fn emi_with(
    inner: &mut GradFn<'_>,
    x: &[f64],
    prev_dir: &[f64],
    n: usize,
    eta: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    if n < 1 || !(eta >= 0.0) {
        return Err(Error::arg("EMI needs n ≥ 1 and eta ≥ 0"));
    }
    if prev_dir.len() != x.len() {
        return Err(Error::Shape {
            expected: vec![x.len()],
            actual: vec![prev_dir.len()],
        });
    }
    let mut mean = vec![0.0; x.len()];
    for _ in 0..n {
        let c = rng.uniform_range(-1.0, 1.0);
        let probe: Vec<f64> = x.iter().zip(prev_dir).map(|(v, d)| v + c * eta * d).collect();
        let g = inner(&probe, rng)?;
        crate::numerics::axpy(1.0 / n as f64, &g, &mut mean);
    }
    Ok(mean)
}

/// Mean gradient over `n` points `x + c_i·η·prev_dir`, `c_i ~ U[-1, 1]`.
pub fn emi_gradient(
    models: &[&dyn Classifier],
    x: &[f64],
    y: usize,
    prev_dir: &[f64],
    n: usize,
    eta: f64,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    emi_with(&mut |v, _| ensemble_gradient(models, v, y), x, prev_dir, n, eta, rng)
}

/// Rescales to unit max-abs; zero vectors stay zero.
pub(crate) fn unit_linf(v: &[f64]) -> Vec<f64> {
    let m = norm_linf(v);
    if m == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / m).collect()
    }
}
