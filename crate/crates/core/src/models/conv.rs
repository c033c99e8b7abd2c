use super::{check_input, check_label, glorot, logit_gradient, standardize, Classifier, Trainable, PIXEL_SCALE};
use crate::error::{Error, Result};
use crate::numerics::{cross_entropy, ImageShape, SeededRng};

/// Two 3×3 same-padded convolutions with tanh, a 2×2 average pool between
/// them and a linear read-out of the flattened second feature map.
///
/// Parameter layout: `[w1 (F1×3×3×Cin) | b1 | w2 (F2×3×3×F1) | b2 | w3 (C×P) | b3]`
/// with `P = ⌊H/2⌋·⌊W/2⌋·F2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyConv {
    image: ImageShape,
    filters1: usize,
    filters2: usize,
    classes: usize,
    params: Vec<f64>,
}

struct Cache {
    z: Vec<f64>,
    h1: Vec<f64>,
    pooled: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Plane {
    h: usize,
    w: usize,
    c: usize,
}

/// Zero-padded 3×3 convolution, stride 1, weights `[cout][ky][kx][cin]`.
fn conv3x3(input: &[f64], p: Plane, weights: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let mut out = vec![0.0; p.h * p.w * cout];
    for r in 0..p.h {
        for c in 0..p.w {
            let o = &mut out[(r * p.w + c) * cout..(r * p.w + c + 1) * cout];
            o.copy_from_slice(bias);
            for ky in 0..3 {
                let rr = r as isize + ky as isize - 1;
                if rr < 0 || rr >= p.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let cc = c as isize + kx as isize - 1;
                    if cc < 0 || cc >= p.w as isize {
                        continue;
                    }
                    let src = &input[(rr as usize * p.w + cc as usize) * p.c..][..p.c];
                    for (f, of) in o.iter_mut().enumerate() {
                        let wk = &weights[((f * 3 + ky) * 3 + kx) * p.c..][..p.c];
                        *of += crate::numerics::dot(wk, src);
                    }
                }
            }
        }
    }
    out
}

/// Back-propagates `dout` through [`conv3x3`]. Accumulates into the optional
/// weight/bias gradients and returns the input gradient when requested.
fn conv3x3_backward(
    input: &[f64],
    p: Plane,
    weights: &[f64],
    cout: usize,
    dout: &[f64],
    mut dweights: Option<(&mut [f64], &mut [f64])>,
    want_input: bool,
) -> Option<Vec<f64>> {
    let mut din = want_input.then(|| vec![0.0; input.len()]);
    for r in 0..p.h {
        for c in 0..p.w {
            let d = &dout[(r * p.w + c) * cout..][..cout];
            if let Some((_, db)) = dweights.as_mut() {
                for (b, v) in db.iter_mut().zip(d) {
                    *b += v;
                }
            }
            for ky in 0..3 {
                let rr = r as isize + ky as isize - 1;
                if rr < 0 || rr >= p.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let cc = c as isize + kx as isize - 1;
                    if cc < 0 || cc >= p.w as isize {
                        continue;
                    }
                    let base = (rr as usize * p.w + cc as usize) * p.c;
                    for (f, &df) in d.iter().enumerate() {
                        if df == 0.0 {
                            continue;
                        }
                        let woff = ((f * 3 + ky) * 3 + kx) * p.c;
                        if let Some((dw, _)) = dweights.as_mut() {
                            for ch in 0..p.c {
                                dw[woff + ch] += df * input[base + ch];
                            }
                        }
                        if let Some(di) = din.as_mut() {
                            for ch in 0..p.c {
                                di[base + ch] += df * weights[woff + ch];
                            }
                        }
                    }
                }
            }
        }
    }
    din
}

impl TinyConv {
    pub fn init(
        image: ImageShape,
        filters1: usize,
        filters2: usize,
        classes: usize,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if image.height < 2 || image.width < 2 {
            return Err(Error::arg("tiny-conv needs images of at least 2×2"));
        }
        if filters1 == 0 || filters2 == 0 {
            return Err(Error::arg("filter counts must be positive"));
        }
        let mut m = Self {
            image,
            filters1,
            filters2,
            classes,
            params: vec![0.0; Self::param_count(image, filters1, filters2, classes)],
        };
        let cin = image.channels;
        let r = m.ranges();
        glorot(rng, &mut m.params[r.w1.clone()], 9 * cin, 9 * filters1);
        glorot(rng, &mut m.params[r.w2.clone()], 9 * filters1, 9 * filters2);
        let flat = (image.height / 2) * (image.width / 2) * filters2;
        glorot(rng, &mut m.params[r.w3.clone()], flat, classes);
        Ok(m)
    }

    pub(crate) fn from_params(
        image: ImageShape,
        filters1: usize,
        filters2: usize,
        classes: usize,
        params: Vec<f64>,
    ) -> Self {
        Self {
            image,
            filters1,
            filters2,
            classes,
            params,
        }
    }

    pub(crate) fn param_count(image: ImageShape, f1: usize, f2: usize, classes: usize) -> usize {
        9 * image.channels * f1 + f1 + 9 * f1 * f2 + f2 + classes * Self::flat_len(image, f2) + classes
    }

    pub(crate) fn flat_len(image: ImageShape, f2: usize) -> usize {
        (image.height / 2) * (image.width / 2) * f2
    }

    pub fn filters1(&self) -> usize {
        self.filters1
    }

    pub fn filters2(&self) -> usize {
        self.filters2
    }

    pub fn image(&self) -> ImageShape {
        self.image
    }

    fn ranges(&self) -> Ranges {
        let (f1, f2, c) = (self.filters1, self.filters2, self.classes);
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        Ranges {
            w1: take(9 * self.image.channels * f1),
            b1: take(f1),
            w2: take(9 * f1 * f2),
            b2: take(f2),
            w3: take(c * Self::flat_len(self.image, f2)),
            b3: take(c),
        }
    }

    fn planes(&self) -> (Plane, Plane) {
        let full = Plane {
            h: self.image.height,
            w: self.image.width,
            c: self.image.channels,
        };
        let pooled = Plane {
            h: self.image.height / 2,
            w: self.image.width / 2,
            c: self.filters1,
        };
        (full, pooled)
    }

    fn forward(&self, x: &[f64]) -> Cache {
        let r = self.ranges();
        let (full, pp) = self.planes();
        let z: Vec<f64> = x.iter().map(|&v| standardize(v)).collect();
        let mut h1 = conv3x3(&z, full, &self.params[r.w1.clone()], &self.params[r.b1.clone()], self.filters1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        let f1 = self.filters1;
        let mut pooled = vec![0.0; pp.h * pp.w * f1];
        for i in 0..pp.h {
            for j in 0..pp.w {
                for f in 0..f1 {
                    let mut s = 0.0;
                    for di in 0..2 {
                        for dj in 0..2 {
                            s += h1[((2 * i + di) * full.w + 2 * j + dj) * f1 + f];
                        }
                    }
                    pooled[(i * pp.w + j) * f1 + f] = 0.25 * s;
                }
            }
        }
        let mut h2 = conv3x3(&pooled, pp, &self.params[r.w2.clone()], &self.params[r.b2.clone()], self.filters2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        let w3 = &self.params[r.w3.clone()];
        let b3 = &self.params[r.b3.clone()];
        let logits = w3
            .chunks_exact(h2.len())
            .zip(b3)
            .map(|(row, b)| crate::numerics::dot(row, &h2) + b)
            .collect();
        Cache {
            z,
            h1,
            pooled,
            h2,
            logits,
        }
    }

    /// Full backward pass. Returns `(input gradient, parameter gradient)`,
    /// each only when requested.
    fn backward(&self, cache: &Cache, up: &[f64], want_input: bool, want_params: bool) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let r = self.ranges();
        let (full, pp) = self.planes();
        let (f1, f2) = (self.filters1, self.filters2);
        let mut grad = want_params.then(|| vec![0.0; self.params.len()]);

        if let Some(g) = grad.as_mut() {
            for (k, row) in g[r.w3.clone()].chunks_exact_mut(cache.h2.len()).enumerate() {
                for (v, a) in row.iter_mut().zip(&cache.h2) {
                    *v = up[k] * a;
                }
            }
            g[r.b3.clone()].copy_from_slice(up);
        }
        let w3 = &self.params[r.w3.clone()];
        let mut da2 = vec![0.0; cache.h2.len()];
        for (row, &u) in w3.chunks_exact(cache.h2.len()).zip(up) {
            crate::numerics::axpy(u, row, &mut da2);
        }
        for (d, h) in da2.iter_mut().zip(&cache.h2) {
            *d *= 1.0 - h * h;
        }

        let dpooled = {
            let dw = grad.as_mut().map(|g| {
                let (lo, hi) = g.split_at_mut(r.b2.start);
                (&mut lo[r.w2.clone()], &mut hi[..f2])
            });
            conv3x3_backward(&cache.pooled, pp, &self.params[r.w2.clone()], f2, &da2, dw, true)
                .expect("requested")
        };

        let mut da1 = vec![0.0; cache.h1.len()];
        for i in 0..pp.h {
            for j in 0..pp.w {
                for f in 0..f1 {
                    let d = 0.25 * dpooled[(i * pp.w + j) * f1 + f];
                    for di in 0..2 {
                        for dj in 0..2 {
                            da1[((2 * i + di) * full.w + 2 * j + dj) * f1 + f] = d;
                        }
                    }
                }
            }
        }
        for (d, h) in da1.iter_mut().zip(&cache.h1) {
            *d *= 1.0 - h * h;
        }

        let dw = grad.as_mut().map(|g| {
            let (lo, hi) = g.split_at_mut(r.b1.start);
            (&mut lo[r.w1.clone()], &mut hi[..f1])
        });
        let dz = conv3x3_backward(&cache.z, full, &self.params[r.w1.clone()], f1, &da1, dw, want_input);
        let dx = dz.map(|mut v| {
            v.iter_mut().for_each(|g| *g /= PIXEL_SCALE);
            v
        });
        (dx, grad)
    }
}

struct Ranges {
    w1: std::ops::Range<usize>,
    b1: std::ops::Range<usize>,
    w2: std::ops::Range<usize>,
    b2: std::ops::Range<usize>,
    w3: std::ops::Range<usize>,
    b3: std::ops::Range<usize>,
}

impl Classifier for TinyConv {
    fn input_len(&self) -> usize {
        self.image.len()
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_input(x, self.image.len())?;
        Ok(self.forward(x).logits)
    }

    fn loss_and_input_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_input(x, self.image.len())?;
        check_label(y, self.classes)?;
        let cache = self.forward(x);
        let up = logit_gradient(&cache.logits, y);
        let (dx, _) = self.backward(&cache, &up, true, false);
        Ok((cross_entropy(&cache.logits, y), dx.expect("requested")))
    }
}

impl Trainable for TinyConv {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss_and_param_gradient(&self, x: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
        check_input(x, self.image.len())?;
        check_label(y, self.classes)?;
        let cache = self.forward(x);
        let up = logit_gradient(&cache.logits, y);
        let (_, grad) = self.backward(&cache, &up, false, true);
        Ok((cross_entropy(&cache.logits, y), grad.expect("requested")))
    }
}
