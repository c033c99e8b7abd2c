use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the first- and second-order gradient terms after `m` steps of
/// momentum with decay μ and a scaled step:
/// `δ_m ≈ c_m·γ·g + d_m·γ²·gH`, momentum `g_m ≈ a_m·g + b_m·γ·gH`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSchedule {
    pub m: usize,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// The same four sums in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExactCoefficients {
    pub m: usize,
    pub mu: BigRational,
    pub a: BigRational,
    pub b: BigRational,
    pub c: BigRational,
    pub d: BigRational,
}

fn int(v: usize) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Exact rational value of a finite `f64`.
pub fn exact_mu(mu: f64) -> Result<BigRational> {
    BigRational::from_float(mu).ok_or_else(|| Error::arg(format!("momentum decay {mu} is not finite")))
}

impl ExactCoefficients {
    /// Direct summation of the closed forms, `0⁰ = 1`.
    pub fn closed_form(m: usize, mu: &BigRational) -> Result<Self> {
        if m < 1 {
            return Err(Error::arg("coefficient schedules start at m = 1"));
        }
        // pow[k] = μ^k
        let mut pow = vec![BigRational::one()];
        for k in 1..m {
            let next = &pow[k - 1] * mu;
            pow.push(next);
        }
        let (mut a, mut b, mut c, mut d) = (
            BigRational::zero(),
            BigRational::zero(),
            BigRational::zero(),
            BigRational::zero(),
        );
        for i in 1..=m {
            a += &pow[i - 1];
            c += int(m - i + 1) * &pow[i - 1];
            if i >= 2 {
                b += int((m - i + 1) * (i - 1)) * &pow[i - 2];
                d += int((m - i + 2) * (m - i + 1) * (i - 1)) * &pow[i - 2] / int(2);
            }
        }
        Ok(Self {
            m,
            mu: mu.clone(),
            a,
            b,
            c,
            d,
        })
    }

    /// One application of the step-to-step recurrences.
    pub fn advance(&self) -> Self {
        let one = BigRational::one();
        Self {
            m: self.m + 1,
            mu: self.mu.clone(),
            a: &self.mu * &self.a + &one,
            b: &self.mu * &self.b + &self.c,
            c: &self.mu * &self.a + &self.c + &one,
            d: &self.mu * &self.b + &self.c + &self.d,
        }
    }

    /// Nearest-`f64` rounding of each coefficient.
    pub fn to_schedule(&self) -> CoefficientSchedule {
        let f = |v: &BigRational| v.to_f64().unwrap_or(f64::NAN);
        CoefficientSchedule {
            m: self.m,
            mu: f(&self.mu),
            a: f(&self.a),
            b: f(&self.b),
            c: f(&self.c),
            d: f(&self.d),
        }
    }
}

/// Closed-form coefficients, summed exactly and rounded once to `f64`.
pub fn coefficients(m: usize, mu: f64) -> Result<CoefficientSchedule> {
    Ok(ExactCoefficients::closed_form(m, &exact_mu(mu)?)?.to_schedule())
}

/// Closed-form coefficients summed in plain `f64`.
pub fn coefficients_f64(m: usize, mu: f64) -> Result<CoefficientSchedule> {
    if m < 1 {
        return Err(Error::arg("coefficient schedules start at m = 1"));
    }
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for i in 1..=m {
        let p1 = mu.powi(i as i32 - 1);
        a += p1;
        c += (m - i + 1) as f64 * p1;
        if i >= 2 {
            let p2 = mu.powi(i as i32 - 2);
            b += ((m - i + 1) * (i - 1)) as f64 * p2;
            d += ((m - i + 2) * (m - i + 1) * (i - 1)) as f64 / 2.0 * p2;
        }
    }
    Ok(CoefficientSchedule { m, mu, a, b, c, d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step() {
        for mu in [0.0, 0.3, 1.0, 1.5] {
            let s = coefficients(1, mu).unwrap();
            assert_eq!((s.a, s.b, s.c, s.d), (1.0, 0.0, 1.0, 0.0));
        }
    }

    #[test]
    fn hand_summed_m3() {
        let s = coefficients(3, 1.0).unwrap();
        assert_eq!((s.a, s.b, s.c, s.d), (3.0, 4.0, 6.0, 5.0));
    }

    #[test]
    fn zero_decay() {
        for m in 1..30 {
            let s = coefficients(m, 0.0).unwrap();
            let mf = m as f64;
            assert_eq!((s.a, s.b, s.c, s.d), (1.0, mf - 1.0, mf, mf * (mf - 1.0) / 2.0));
        }
    }

    #[test]
    fn recurrences_hold_exactly() {
        for mu in [0.0, 0.5, 1.0, 1.5] {
            let q = exact_mu(mu).unwrap();
            let mut prev = ExactCoefficients::closed_form(1, &q).unwrap();
            for m in 2..=50 {
                let next = ExactCoefficients::closed_form(m, &q).unwrap();
                assert_eq!(prev.advance(), next, "mu={mu} m={m}");
                prev = next;
            }
        }
    }

    #[test]
    fn float_sum_is_close_to_exact() {
        for mu in [0.0, 0.5, 1.0, 1.5] {
            for m in 1..=50 {
                let e = coefficients(m, mu).unwrap();
                let f = coefficients_f64(m, mu).unwrap();
                for (x, y) in [(e.a, f.a), (e.b, f.b), (e.c, f.c), (e.d, f.d)] {
                    assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "mu={mu} m={m}: {x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn rejects_m_zero() {
        assert!(coefficients(0, 1.0).is_err());
        assert!(coefficients(3, f64::NAN).is_err());
    }
}
