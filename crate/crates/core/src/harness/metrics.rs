use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Aggregate attack quality over a set of examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Fraction of examples meeting the attack goal, counting examples the
    /// target already misclassified.
    pub asr: f64,
    /// Mean |δ| over all pixels of all examples, 0–255 scale.
    pub mad: f64,
    /// √(mean δ²) over the same pixels.
    pub rmsd: f64,
    pub examples: usize,
}

/// Metrics of one (method, source, target) cell. `targeted` needs
/// `target_labels`; success then means predicting the target.
pub fn compute_metrics(
    originals: &[Vec<f64>],
    adversarials: &[Vec<f64>],
    predictions: &[usize],
    labels: &[usize],
    targeted: bool,
    target_labels: Option<&[usize]>,
) -> Result<Metrics> {
    let n = originals.len();
    if adversarials.len() != n || predictions.len() != n || labels.len() != n {
        return Err(Error::arg(format!(
            "misaligned inputs: {n} originals, {} adversarials, {} predictions, {} labels",
            adversarials.len(),
            predictions.len(),
            labels.len()
        )));
    }
    let targets = match (targeted, target_labels) {
        (true, Some(t)) if t.len() == n => Some(t),
        (true, _) => return Err(Error::arg("targeted metrics need one target label per example")),
        (false, _) => None,
    };
    if n == 0 {
        return Ok(Metrics {
            asr: 0.0,
            mad: 0.0,
            rmsd: 0.0,
            examples: 0,
        });
    }
    let mut hits = 0usize;
    let (mut abs, mut sq, mut pixels) = (0.0, 0.0, 0usize);
    for i in 0..n {
        if originals[i].len() != adversarials[i].len() {
            return Err(Error::Shape {
                expected: vec![originals[i].len()],
                actual: vec![adversarials[i].len()],
            });
        }
        let ok = match targets {
            Some(t) => predictions[i] == t[i],
            None => predictions[i] != labels[i],
        };
        hits += ok as usize;
        for (a, o) in adversarials[i].iter().zip(&originals[i]) {
            let d = a - o;
            abs += d.abs();
            sq += d * d;
        }
        pixels += originals[i].len();
    }
    let p = pixels.max(1) as f64;
    Ok(Metrics {
        asr: hits as f64 / n as f64,
        mad: abs / p,
        rmsd: (sq / p).sqrt(),
        examples: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
}

/// `bins` equal-width bins spanning `[min, max]` of `values`; the last bin
/// is closed on the right. Non-finite values are rejected.
pub fn histogram(values: &[f64], bins: usize) -> Result<Vec<HistogramBin>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    histogram_in(values, bins, lo, hi)
}

/// Like [`histogram`] over a caller-chosen `[lo, hi]`, so several samples can
/// share bin edges. Values outside the range are rejected.
pub fn histogram_in(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Vec<HistogramBin>> {
    if bins < 1 {
        return Err(Error::arg("histogram needs at least one bin"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::arg("histogram values must be finite"));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    if values.iter().any(|&v| v < lo || v > hi) {
        return Err(Error::arg(format!("histogram values fall outside [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(vec![HistogramBin {
            left: lo,
            right: hi,
            count: values.len(),
        }]);
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|k| HistogramBin {
            left: lo + k as f64 * width,
            right: if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width },
            count: 0,
        })
        .collect();
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        out[k].count += 1;
    }
    Ok(out)
}

/// Median of a non-empty slice (mean of the two middle values for even
/// lengths).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances() {
        let o = vec![vec![100.0; 4]];
        let same = compute_metrics(&o, &o, &[0], &[0], false, None).unwrap();
        assert_eq!((same.mad, same.rmsd, same.asr), (0.0, 0.0, 0.0));
        let u = compute_metrics(&o, &[vec![108.0, 92.0, 108.0, 92.0]], &[1], &[0], false, None).unwrap();
        assert_eq!((u.mad, u.rmsd, u.asr), (8.0, 8.0, 1.0));
        let one = compute_metrics(&o, &[vec![108.0, 100.0, 100.0, 100.0]], &[0], &[0], false, None).unwrap();
        assert_eq!((one.mad, one.rmsd), (2.0, 4.0));
    }

    #[test]
    fn targeted_success() {
        let o = vec![vec![0.0], vec![0.0]];
        let m = compute_metrics(&o, &o, &[2, 1], &[0, 0], true, Some(&[2, 2])).unwrap();
        assert_eq!(m.asr, 0.5);
        assert!(compute_metrics(&o, &o, &[2, 1], &[0, 0], true, None).is_err());
        assert!(compute_metrics(&o, &o, &[2], &[0, 0], false, None).is_err());
    }

    #[test]
    fn histogram_partitions() {
        let v: Vec<f64> = (0..100).map(|i| ((i * 37) % 101) as f64 * 0.3 - 4.0).collect();
        let h = histogram(&v, 7).unwrap();
        assert_eq!(h.iter().map(|b| b.count).sum::<usize>(), 100);
        for w in h.windows(2) {
            assert_eq!(w[0].right, w[1].left);
        }
        assert_eq!(h[0].left, v.iter().copied().fold(f64::INFINITY, f64::min));
        assert_eq!(h[6].right, v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        assert_eq!(histogram(&[2.0, 2.0], 3).unwrap().len(), 1);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
    }
}
