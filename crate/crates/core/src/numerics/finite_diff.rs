use super::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::arg(format!("step size must be positive, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Evaluation { index: i });
        }
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Second-difference Hessian estimate, symmetrized as `(M + Mᵀ) / 2`.
///
/// Diagonal entries use `(f(x+h) - 2f(x) + f(x-h)) / h²`; off-diagonal entries
/// use the four-point mixed difference.
pub fn finite_diff_hessian<F>(f: F, x: &[f64], h: f64) -> Result<Tensor>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::arg(format!("step size must be positive, got {h}")));
    }
    let n = x.len();
    let mut probe = x.to_vec();
    let eval = |p: &[f64], idx: usize| -> Result<f64> {
        let v = f(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation { index: idx })
        }
    };
    let f0 = eval(&probe, 0)?;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        probe[i] = x[i] + h;
        let fp = eval(&probe, i)?;
        probe[i] = x[i] - h;
        let fm = eval(&probe, i)?;
        probe[i] = x[i];
        m[i * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
        for j in (i + 1)..n {
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                probe[i] = x[i] + si * h;
                probe[j] = x[j] + sj * h;
                let v = eval(&probe, i);
                probe[i] = x[i];
                probe[j] = x[j];
                v
            };
            let fpp = corner(1.0, 1.0)?;
            let fpm = corner(1.0, -1.0)?;
            let fmp = corner(-1.0, 1.0)?;
            let fmm = corner(-1.0, -1.0)?;
            let v = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            m[i * n + j] = v;
            m[j * n + i] = v;
        }
    }
    // Already symmetric by construction; the explicit average keeps the
    // contract independent of the stencil.
    let mut sym = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            sym[i * n + j] = 0.5 * (m[i * n + j] + m[j * n + i]);
        }
    }
    Tensor::new(vec![n, n], sym)
}

/// `‖a - b‖₂ / max(‖a‖₂, ‖b‖₂)`, with 0 when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = super::norm_l2(a).max(super::norm_l2(b));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_of_half_norm_squared() {
        let f = |v: &[f64]| 0.5 * v.iter().map(|x| x * x).sum::<f64>();
        let g = finite_diff_gradient(f, &[1.0, -2.0], 1e-5).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-8);
        assert!((g[1] + 2.0).abs() < 1e-8);
    }

    #[test]
    fn affine_is_exact() {
        let f = |v: &[f64]| 3.0 * v[0] - 0.5 * v[1] + 7.0;
        let g = finite_diff_gradient(f, &[10.0, -4.0], 1e-3).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-9);
        assert!((g[1] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_step_and_nonfinite() {
        let f = |v: &[f64]| v[0];
        assert!(finite_diff_gradient(f, &[1.0], 0.0).is_err());
        let bad = |v: &[f64]| if v[0] > 1.0 { f64::NAN } else { v[0] };
        assert!(matches!(
            finite_diff_gradient(bad, &[1.0], 1e-3),
            Err(Error::Evaluation { index: 0 })
        ));
    }

    #[test]
    fn hessian_of_quadratic() {
        let h = [[2.0, 1.0], [1.0, 3.0]];
        let f = |v: &[f64]| {
            0.5 * (h[0][0] * v[0] * v[0] + 2.0 * h[0][1] * v[0] * v[1] + h[1][1] * v[1] * v[1])
        };
        let m = finite_diff_hessian(f, &[0.3, -0.7], 1e-4).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.at(i, j) - h[i][j]).abs() < 1e-6, "{i},{j}");
            }
        }
    }

    #[test]
    fn hessian_of_affine_is_zero() {
        let f = |v: &[f64]| 2.0 * v[0] + v[1] - 1.0;
        let m = finite_diff_hessian(f, &[1.0, 2.0], 1e-3).unwrap();
        assert!(m.data().iter().all(|x| x.abs() < 1e-6));
    }
}
