//! The two scoring networks behind a generator step: raw scalar out, exact
//! parameter gradient back.

use serde::{Deserialize, Serialize};

use crate::numerics::{ImageShape, SeededRng};

const NORM_EPS: f64 = 1e-5;

/// Architecture of one per-step network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorArch {
    /// `[x ⊕ g] → hidden1 → hidden2 → 1`, tanh hidden units.
    Mlp { hidden1: usize, hidden2: usize },
    /// Three 3×3 stride-2 convolutions, each followed by instance norm and
    /// tanh, then `flatten → hidden → 1`.
    Conv { channels: usize, hidden: usize },
}

impl GeneratorArch {
    pub const MLP: GeneratorArch = GeneratorArch::Mlp {
        hidden1: 512,
        hidden2: 128,
    };
    pub const CONV: GeneratorArch = GeneratorArch::Conv {
        channels: 32,
        hidden: 128,
    };
}

/// Shape of a `(rows, cols, channels)` activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Plane {
    h: usize,
    w: usize,
    c: usize,
}

impl Plane {
    fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    /// Output plane of a 3×3, stride-2, pad-1 convolution.
    fn halved(&self, c: usize) -> Plane {
        Plane {
            h: (self.h + 1) / 2,
            w: (self.w + 1) / 2,
            c,
        }
    }
}

pub(crate) fn layout(arch: GeneratorArch, image: ImageShape) -> Vec<(String, Vec<usize>)> {
    let l = |n: &str, s: Vec<usize>| (n.to_string(), s);
    match arch {
        GeneratorArch::Mlp { hidden1, hidden2 } => {
            let d = 2 * image.len();
            vec![
                l("w1", vec![hidden1, d]),
                l("b1", vec![hidden1]),
                l("w2", vec![hidden2, hidden1]),
                l("b2", vec![hidden2]),
                l("w3", vec![1, hidden2]),
                l("b3", vec![1]),
            ]
        }
        GeneratorArch::Conv { channels, hidden } => {
            let planes = conv_planes(image, channels);
            let mut out = Vec::new();
            for i in 0..3 {
                out.push(l(&format!("conv{}.weight", i + 1), vec![channels, 3, 3, planes[i].c]));
                out.push(l(&format!("conv{}.bias", i + 1), vec![channels]));
            }
            out.push(l("fc1.weight", vec![hidden, planes[3].len()]));
            out.push(l("fc1.bias", vec![hidden]));
            out.push(l("fc2.weight", vec![1, hidden]));
            out.push(l("fc2.bias", vec![1]));
            out
        }
    }
}

pub(crate) fn param_count(arch: GeneratorArch, image: ImageShape) -> usize {
    layout(arch, image).iter().map(|(_, s)| s.iter().product::<usize>()).sum()
}

fn conv_planes(image: ImageShape, channels: usize) -> [Plane; 4] {
    let p0 = Plane {
        h: image.height,
        w: image.width,
        c: 2 * image.channels,
    };
    let p1 = p0.halved(channels);
    let p2 = p1.halved(channels);
    let p3 = p2.halved(channels);
    [p0, p1, p2, p3]
}

/// Glorot-uniform weights, zero biases.
pub(crate) fn init(arch: GeneratorArch, image: ImageShape, rng: &mut SeededRng) -> Vec<f64> {
    let mut params = Vec::new();
    for (name, shape) in layout(arch, image) {
        let n: usize = shape.iter().product();
        if name.ends_with("bias") || name.starts_with('b') {
            params.extend(std::iter::repeat_n(0.0, n));
        } else {
            let fan_out = shape[0];
            let fan_in = n / fan_out;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..n).map(|_| rng.uniform_range(-bound, bound)));
        }
    }
    params
}

fn dense(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + crate::numerics::dot(&w[o * x.len()..(o + 1) * x.len()], x))
        .collect()
}

/// `dx` of a dense layer, accumulating `dw`, `db` into `grads`.
fn dense_backward(w: &[f64], x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64], want_dx: bool) -> Vec<f64> {
    let n = x.len();
    let mut dx = if want_dx { vec![0.0; n] } else { Vec::new() };
    for (o, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        db[o] += d;
        let row = &mut dw[o * n..(o + 1) * n];
        for (r, xi) in row.iter_mut().zip(x) {
            *r += d * xi;
        }
        if want_dx {
            crate::numerics::axpy(d, &w[o * n..(o + 1) * n], &mut dx);
        }
    }
    dx
}

/// 3×3, stride 2, pad 1 convolution; weights `[cout][ky][kx][cin]`.
fn conv_s2(input: &[f64], p: Plane, weights: &[f64], bias: &[f64], cout: usize) -> Vec<f64> {
    let q = p.halved(cout);
    let mut out = vec![0.0; q.len()];
    for r in 0..q.h {
        for c in 0..q.w {
            let o = &mut out[(r * q.w + c) * cout..(r * q.w + c + 1) * cout];
            o.copy_from_slice(bias);
            for ky in 0..3 {
                let ir = (2 * r + ky) as isize - 1;
                if ir < 0 || ir >= p.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let ic = (2 * c + kx) as isize - 1;
                    if ic < 0 || ic >= p.w as isize {
                        continue;
                    }
                    let at = (ir as usize * p.w + ic as usize) * p.c;
                    let pix = &input[at..at + p.c];
                    for (f, of) in o.iter_mut().enumerate() {
                        let wat = ((f * 3 + ky) * 3 + kx) * p.c;
                        *of += crate::numerics::dot(&weights[wat..wat + p.c], pix);
                    }
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_s2_backward(
    input: &[f64],
    p: Plane,
    weights: &[f64],
    cout: usize,
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Vec<f64> {
    let q = p.halved(cout);
    let mut dx = if want_dx { vec![0.0; p.len()] } else { Vec::new() };
    for r in 0..q.h {
        for c in 0..q.w {
            let d = &dout[(r * q.w + c) * cout..(r * q.w + c + 1) * cout];
            for (f, &df) in d.iter().enumerate() {
                db[f] += df;
            }
            for ky in 0..3 {
                let ir = (2 * r + ky) as isize - 1;
                if ir < 0 || ir >= p.h as isize {
                    continue;
                }
                for kx in 0..3 {
                    let ic = (2 * c + kx) as isize - 1;
                    if ic < 0 || ic >= p.w as isize {
                        continue;
                    }
                    let at = (ir as usize * p.w + ic as usize) * p.c;
                    for (f, &df) in d.iter().enumerate() {
                        if df == 0.0 {
                            continue;
                        }
                        let wat = ((f * 3 + ky) * 3 + kx) * p.c;
                        for ch in 0..p.c {
                            dw[wat + ch] += df * input[at + ch];
                            if want_dx {
                                dx[at + ch] += df * weights[wat + ch];
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

/// Per-channel normalization over spatial positions. Returns the output and
/// the per-channel inverse standard deviations.
fn instance_norm(v: &[f64], p: Plane) -> (Vec<f64>, Vec<f64>) {
    let n = (p.h * p.w) as f64;
    let mut out = vec![0.0; v.len()];
    let mut inv = vec![0.0; p.c];
    for ch in 0..p.c {
        let mean = v.iter().skip(ch).step_by(p.c).sum::<f64>() / n;
        let var = v.iter().skip(ch).step_by(p.c).map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        inv[ch] = 1.0 / (var + NORM_EPS).sqrt();
        for i in (ch..v.len()).step_by(p.c) {
            out[i] = (v[i] - mean) * inv[ch];
        }
    }
    (out, inv)
}

fn instance_norm_backward(y: &[f64], inv: &[f64], p: Plane, dy: &[f64]) -> Vec<f64> {
    let n = (p.h * p.w) as f64;
    let mut dx = vec![0.0; dy.len()];
    for ch in 0..p.c {
        let mut mean_dy = 0.0;
        let mut mean_dyy = 0.0;
        for i in (ch..dy.len()).step_by(p.c) {
            mean_dy += dy[i];
            mean_dyy += dy[i] * y[i];
        }
        mean_dy /= n;
        mean_dyy /= n;
        for i in (ch..dy.len()).step_by(p.c) {
            dx[i] = inv[ch] * (dy[i] - mean_dy - y[i] * mean_dyy);
        }
    }
    dx
}

fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(a, d)| d * (1.0 - a * a)).collect()
}

/// Activations kept from a forward pass.
pub(crate) struct Cache {
    /// Inputs to each learned layer, in order.
    inputs: Vec<Vec<f64>>,
    /// Post-tanh outputs of hidden layers, in order.
    pub(crate) hidden: Vec<Vec<f64>>,
    /// Instance-norm outputs and inverse stds of conv layers (None when
    /// skipped on a 1×1 plane).
    norms: Vec<Option<(Vec<f64>, Vec<f64>)>>,
    pub(crate) raw: f64,
}

/// Splits `params` by `layout` into consecutive slices.
fn split<'a>(params: &'a [f64], lay: &[(String, Vec<usize>)]) -> Vec<&'a [f64]> {
    let mut at = 0;
    lay.iter()
        .map(|(_, s)| {
            let n: usize = s.iter().product();
            let out = &params[at..at + n];
            at += n;
            out
        })
        .collect()
}

pub(crate) fn forward(arch: GeneratorArch, image: ImageShape, params: &[f64], features: &[f64]) -> Cache {
    let lay = layout(arch, image);
    let p = split(params, &lay);
    match arch {
        GeneratorArch::Mlp { .. } => {
            let h1: Vec<f64> = dense(p[0], p[1], features).into_iter().map(f64::tanh).collect();
            let h2: Vec<f64> = dense(p[2], p[3], &h1).into_iter().map(f64::tanh).collect();
            let raw = dense(p[4], p[5], &h2)[0];
            Cache {
                inputs: vec![features.to_vec(), h1.clone(), h2.clone()],
                hidden: vec![h1, h2],
                norms: Vec::new(),
                raw,
            }
        }
        GeneratorArch::Conv { channels, .. } => {
            let planes = conv_planes(image, channels);
            let mut inputs = vec![features.to_vec()];
            let mut hidden = Vec::new();
            let mut norms = Vec::new();
            let mut a = features.to_vec();
            for i in 0..3 {
                let z = conv_s2(&a, planes[i], p[2 * i], p[2 * i + 1], channels);
                let q = planes[i + 1];
                let normed = if q.h * q.w > 1 {
                    let (y, inv) = instance_norm(&z, q);
                    norms.push(Some((y.clone(), inv)));
                    y
                } else {
                    norms.push(None);
                    z
                };
                a = normed.into_iter().map(f64::tanh).collect();
                hidden.push(a.clone());
                inputs.push(a.clone());
            }
            let h: Vec<f64> = dense(p[6], p[7], &a).into_iter().map(f64::tanh).collect();
            let raw = dense(p[8], p[9], &h)[0];
            hidden.push(h.clone());
            inputs.push(h);
            Cache {
                inputs,
                hidden,
                norms,
                raw,
            }
        }
    }
}

/// Gradient of the raw output w.r.t. the flat parameter vector, times `draw`.
pub(crate) fn backward(arch: GeneratorArch, image: ImageShape, params: &[f64], cache: &Cache, draw: f64) -> Vec<f64> {
    let lay = layout(arch, image);
    if draw == 0.0 {
        return vec![0.0; params.len()];
    }
    let p = split(params, &lay);
    let mut g: Vec<Vec<f64>> = lay.iter().map(|(_, s)| vec![0.0; s.iter().product()]).collect();
    let mut grad_of = |w: usize, x: &[f64], dy: &[f64], want_dx: bool| {
        let (lo, hi) = g.split_at_mut(w + 1);
        dense_backward(p[w], x, dy, &mut lo[w], &mut hi[0], want_dx)
    };
    match arch {
        GeneratorArch::Mlp { .. } => {
            let dh2 = grad_of(4, &cache.inputs[2], &[draw], true);
            let dz2 = tanh_backward(&cache.hidden[1], &dh2);
            let dh1 = grad_of(2, &cache.inputs[1], &dz2, true);
            let dz1 = tanh_backward(&cache.hidden[0], &dh1);
            grad_of(0, &cache.inputs[0], &dz1, false);
        }
        GeneratorArch::Conv { channels, .. } => {
            let planes = conv_planes(image, channels);
            let dh = grad_of(8, &cache.inputs[4], &[draw], true);
            let dz = tanh_backward(&cache.hidden[3], &dh);
            let mut da = grad_of(6, &cache.inputs[3], &dz, true);
            for i in (0..3).rev() {
                let dn = tanh_backward(&cache.hidden[i], &da);
                let dzc = match &cache.norms[i] {
                    Some((y, inv)) => instance_norm_backward(y, inv, planes[i + 1], &dn),
                    None => dn,
                };
                let (lo, hi) = g.split_at_mut(2 * i + 1);
                da = conv_s2_backward(
                    &cache.inputs[i],
                    planes[i],
                    p[2 * i],
                    channels,
                    &dzc,
                    &mut lo[2 * i],
                    &mut hi[0],
                    i > 0,
                );
            }
        }
    }
    g.concat()
}
