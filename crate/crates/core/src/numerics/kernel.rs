use super::Tensor;
use crate::error::{Error, Result};

/// Normalized `k × k` Gaussian kernel centred on the middle tap.
pub fn gaussian_kernel_2d(k: usize, sigma: f64) -> Result<Tensor> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::arg(format!("kernel size must be odd, got {k}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("kernel width must be positive, got {sigma}")));
    }
    let r = (k / 2) as isize;
    let mut data = Vec::with_capacity(k * k);
    for i in -r..=r {
        for j in -r..=r {
            let d2 = (i * i + j * j) as f64;
            data.push((-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = data.iter().sum();
    data.iter_mut().for_each(|v| *v /= total);
    Tensor::new(vec![k, k], data)
}
