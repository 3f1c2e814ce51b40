//! Direct-evaluation oracles. These follow the defining sums literally and
//! share no code with the library's kernels.
#![allow(dead_code)]

use ldcnet::{Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape, lo: f64, hi: f64) -> Tensor {
    let data = (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Zero-padded read; `None` outside the image.
fn read(x: &Tensor, n: usize, c: usize, y: isize, xx: isize) -> Option<f64> {
    let s = x.shape();
    if y < 0 || xx < 0 || y as usize >= s.h || xx as usize >= s.w {
        None
    } else {
        Some(x.get(n, c, y as usize, xx as usize))
    }
}

/// `y[o,p] = Σ_c Σ_{dy,dx} w[o,c,dy,dx] · x[c, p·s + (dy,dx) − pad] + b[o]`.
pub fn conv_direct(x: &Tensor, w: &Tensor, b: Option<&Tensor>, stride: usize, pad: usize) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    Tensor::from_fn(Shape::new(xs.n, ws.n, oh, ow), |n, o, py, px| {
        let mut acc = b.map_or(0.0, |b| b.get(0, o, 0, 0));
        for c in 0..xs.c {
            for dy in 0..k {
                for dx in 0..k {
                    let y = (py * stride + dy) as isize - pad as isize;
                    let xx = (px * stride + dx) as isize - pad as isize;
                    acc += w.get(o, c, dy, dx) * read(x, n, c, y, xx).unwrap_or(0.0);
                }
            }
        }
        acc
    })
}

/// `θ · Σ ω (x[p₀+pₙ] − x[p₀]) + (1 − θ) · Σ ω x[p₀+pₙ] + b`, same padding.
pub fn cdc_literal(x: &Tensor, w: &Tensor, b: Option<&Tensor>, theta: f64) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let r = (k / 2) as isize;
    Tensor::from_fn(Shape::new(xs.n, ws.n, xs.h, xs.w), |n, o, py, px| {
        let mut diff = 0.0;
        let mut vanilla = 0.0;
        for c in 0..xs.c {
            let centre = x.get(n, c, py, px);
            for dy in 0..k {
                for dx in 0..k {
                    let v = read(x, n, c, py as isize + dy as isize - r, px as isize + dx as isize - r).unwrap_or(0.0);
                    diff += w.get(o, c, dy, dx) * (v - centre);
                    vanilla += w.get(o, c, dy, dx) * v;
                }
            }
        }
        theta * diff + (1.0 - theta) * vanilla + b.map_or(0.0, |b| b.get(0, o, 0, 0))
    })
}

/// Channel normalisation `m^c / Σ_v |m^v|` per pixel.
pub fn normalize_direct(m: &Tensor) -> Tensor {
    let s = m.shape();
    Tensor::from_fn(s, |n, c, h, w| {
        let total: f64 = (0..s.c).map(|v| m.get(n, v, h, w).abs()).sum();
        m.get(n, c, h, w) / total
    })
}

/// IAICD evaluated pixel by pixel: centre from the in-image window weighted by
/// `a · M`, optionally renormalised, then `Σ ω (x[p₀+pₙ] − centre) + b`.
pub fn iaicd_direct(
    x: &Tensor,
    w: &Tensor,
    b: Option<&Tensor>,
    m: &Tensor,
    agg: Option<&Tensor>,
    renormalize: bool,
) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let r = (k / 2) as isize;
    let big_m = normalize_direct(m);
    let cm = m.shape().c;
    Tensor::from_fn(Shape::new(xs.n, ws.n, xs.h, xs.w), |n, o, py, px| {
        let mut acc = b.map_or(0.0, |b| b.get(0, o, 0, 0));
        for c in 0..xs.c {
            let mut num = 0.0;
            let mut den = 0.0;
            for dy in 0..k {
                for dx in 0..k {
                    let (y, xx) = (py as isize + dy as isize - r, px as isize + dx as isize - r);
                    if let Some(v) = read(x, n, c, y, xx) {
                        let a = agg.map_or(1.0, |a| a.get(0, 0, dy, dx));
                        let weight = a * big_m.get(n, c % cm, y as usize, xx as usize);
                        num += weight * v;
                        den += weight;
                    }
                }
            }
            let centre = if renormalize { num / den } else { num };
            for dy in 0..k {
                for dx in 0..k {
                    let v = read(x, n, c, py as isize + dy as isize - r, px as isize + dx as isize - r).unwrap_or(0.0);
                    acc += w.get(o, c, dy, dx) * (v - centre);
                }
            }
        }
        acc
    })
}

pub fn block_mean(x: &Tensor) -> Tensor {
    let s = x.shape();
    Tensor::from_fn(Shape::new(s.n, s.c, s.h / 2, s.w / 2), |n, c, h, w| {
        let mut acc = 0.0;
        for dy in 0..2 {
            for dx in 0..2 {
                acc += x.get(n, c, 2 * h + dy, 2 * w + dx);
            }
        }
        acc / 4.0
    })
}

/// Bilinear ×2 with output centre `i` sampling input coordinate
/// `(i + 0.5)/2 − 0.5`, clamped to the image.
pub fn bilinear_direct(x: &Tensor) -> Tensor {
    let s = x.shape();
    let coord = |i: usize, len: usize| ((i as f64 + 0.5) / 2.0 - 0.5).max(0.0).min((len - 1) as f64);
    Tensor::from_fn(Shape::new(s.n, s.c, 2 * s.h, 2 * s.w), |n, c, h, w| {
        let sy = coord(h, s.h);
        let sx = coord(w, s.w);
        let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
        let (y1, x1) = ((y0 + 1).min(s.h - 1), (x0 + 1).min(s.w - 1));
        let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
        x.get(n, c, y0, x0) * (1.0 - fy) * (1.0 - fx)
            + x.get(n, c, y0, x1) * (1.0 - fy) * fx
            + x.get(n, c, y1, x0) * fy * (1.0 - fx)
            + x.get(n, c, y1, x1) * fy * fx
    })
}

/// Central differences of `loss` with respect to every element of `x`.
pub fn finite_difference(x: &Tensor, h: f64, loss: impl Fn(&Tensor) -> f64) -> Tensor {
    let mut grad = Tensor::zeros(x.shape());
    for i in 0..x.numel() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        grad.data_mut()[i] = (loss(&plus) - loss(&minus)) / (2.0 * h);
    }
    grad
}

/// `|a − b| / max(|a|, |b|)`, or the absolute difference when both are tiny.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-8 {
        (a - b).abs()
    } else {
        (a - b).abs() / scale
    }
}

/// `(1/n) Σ_i Σ_{j in 5×5 window} G_ij |m_i − m_j|`, Gaussian σ = 1 normalised
/// over the in-image taps around `i`.
pub fn smoothness_direct(m: &Tensor) -> f64 {
    let s = m.shape();
    let mut total = 0.0;
    for n in 0..s.n {
        for c in 0..s.c {
            for h in 0..s.h as isize {
                for w in 0..s.w as isize {
                    let mut weights = Vec::new();
                    for dy in -2isize..=2 {
                        for dx in -2isize..=2 {
                            let (y, x) = (h + dy, w + dx);
                            if y >= 0 && x >= 0 && y < s.h as isize && x < s.w as isize {
                                weights.push(((y, x), (-((dy * dy + dx * dx) as f64) / 2.0).exp()));
                            }
                        }
                    }
                    let norm: f64 = weights.iter().map(|(_, g)| g).sum();
                    let mi = m.get(n, c, h as usize, w as usize);
                    for ((y, x), g) in weights {
                        total += g / norm * (mi - m.get(n, c, y as usize, x as usize)).abs();
                    }
                }
            }
        }
    }
    total / s.numel() as f64
}

/// Valid `(pred, truth)` pairs by explicit loop.
fn pairs(o: &Tensor, d: &Tensor, valid: &Tensor) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..o.numel() {
        if valid.data()[i] > 0.0 {
            out.push((o.data()[i], d.data()[i]));
        }
    }
    out
}

/// `[rmse, mae, irmse, imae]` by direct summation.
pub fn completion_direct(o: &Tensor, d: &Tensor, valid: &Tensor) -> [f64; 4] {
    let p = pairs(o, d, valid);
    let n = p.len() as f64;
    let (mut se, mut ae, mut ise, mut iae) = (0.0, 0.0, 0.0, 0.0);
    for (o, d) in p {
        se += (o - d) * (o - d);
        ae += (o - d).abs();
        let e = 1000.0 / o - 1000.0 / d;
        ise += e * e;
        iae += e.abs();
    }
    [(se / n).sqrt(), ae / n, (ise / n).sqrt(), iae / n]
}

/// `[abs_rel, sq_rel, rmse, rmse_log, delta1, delta2, delta3]` by direct summation.
pub fn estimation_direct(o: &Tensor, d: &Tensor, valid: &Tensor) -> [f64; 7] {
    let p = pairs(o, d, valid);
    let n = p.len() as f64;
    let mut acc = [0.0; 7];
    for (o, d) in p {
        acc[0] += (o - d).abs() / d;
        acc[1] += (o - d) * (o - d) / d;
        acc[2] += (o - d) * (o - d);
        acc[3] += (o.ln() - d.ln()) * (o.ln() - d.ln());
        let ratio = if o > d { o / d } else { d / o };
        let mut t = 1.0;
        for k in 0..3 {
            t *= 1.25;
            if ratio < t {
                acc[4 + k] += 1.0;
            }
        }
    }
    let mut out = acc.map(|v| v / n);
    out[2] = out[2].sqrt();
    out[3] = out[3].sqrt();
    out
}
