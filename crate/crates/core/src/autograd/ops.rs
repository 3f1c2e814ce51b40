//! Differentiable operations on [`Var`].

use super::{record_branches, BackwardCtx, Var};
use crate::error::{shape_err, Result};
use crate::tensor::{compensated_sum, kernels, Shape, Tensor};

fn unary(x: &Var, value: Tensor, dfdx: impl Fn(f64, f64) -> f64 + 'static) -> Var {
    // dfdx receives (input, output) per element
    Var::from_op(
        value,
        vec![x.clone()],
        Box::new(move |ctx: &BackwardCtx<'_>| {
            let data = ctx
                .grad
                .data()
                .iter()
                .zip(ctx.inputs[0].data())
                .zip(ctx.output.data())
                .map(|((g, &xi), &yi)| g * dfdx(xi, yi))
                .collect();
            vec![Some(Tensor::from_vec(ctx.grad.shape(), data).expect("same shape"))]
        }),
    )
}

pub fn add(a: &Var, b: &Var) -> Result<Var> {
    let value = a.value().zip_map(b.value(), |x, y| x + y)?;
    Ok(Var::from_op(
        value,
        vec![a.clone(), b.clone()],
        Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]),
    ))
}

pub fn sub(a: &Var, b: &Var) -> Result<Var> {
    let value = a.value().zip_map(b.value(), |x, y| x - y)?;
    Ok(Var::from_op(
        value,
        vec![a.clone(), b.clone()],
        Box::new(|ctx| vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]),
    ))
}

pub fn mul(a: &Var, b: &Var) -> Result<Var> {
    let value = a.value().zip_map(b.value(), |x, y| x * y)?;
    Ok(Var::from_op(
        value,
        vec![a.clone(), b.clone()],
        Box::new(|ctx| {
            let ga = ctx.needs[0].then(|| ctx.grad.zip_map(ctx.inputs[1], |g, y| g * y).unwrap());
            let gb = ctx.needs[1].then(|| ctx.grad.zip_map(ctx.inputs[0], |g, x| g * x).unwrap());
            vec![ga, gb]
        }),
    ))
}

pub fn div(a: &Var, b: &Var) -> Result<Var> {
    let value = a.value().zip_map(b.value(), |x, y| x / y)?;
    Ok(Var::from_op(
        value,
        vec![a.clone(), b.clone()],
        Box::new(|ctx| {
            let ga = ctx.needs[0].then(|| ctx.grad.zip_map(ctx.inputs[1], |g, y| g / y).unwrap());
            let gb = ctx.needs[1].then(|| {
                let q = ctx.grad.zip_map(ctx.output, |g, out| g * out).unwrap();
                q.zip_map(ctx.inputs[1], |gq, y| -gq / y).unwrap()
            });
            vec![ga, gb]
        }),
    ))
}

pub fn scale(x: &Var, k: f64) -> Var {
    unary(x, x.value().map(|v| k * v), move |_, _| k)
}

pub fn add_scalar(x: &Var, k: f64) -> Var {
    unary(x, x.value().map(|v| v + k), |_, _| 1.0)
}

pub fn square(x: &Var) -> Var {
    unary(x, x.value().map(|v| v * v), |xi, _| 2.0 * xi)
}

pub fn exp(x: &Var) -> Var {
    unary(x, x.value().map(f64::exp), |_, y| y)
}

pub fn relu(x: &Var) -> Var {
    record_branches(x.value().data().iter().copied(), 0.0);
    unary(x, x.value().map(|v| v.max(0.0)), |xi, _| if xi > 0.0 { 1.0 } else { 0.0 })
}

pub(crate) fn sigmoid_f(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Var) -> Var {
    unary(x, x.value().map(sigmoid_f), |_, y| y * (1.0 - y))
}

/// `log(1 + e^x)`, strictly positive for finite input.
pub fn softplus(x: &Var) -> Var {
    let value = x.value().map(|v| v.max(0.0) + (-v.abs()).exp().ln_1p());
    unary(x, value, |xi, _| sigmoid_f(xi))
}

/// Clamp into `[lo, hi]`; the gradient is zero where the clamp is active.
pub fn clamp(x: &Var, lo: f64, hi: f64) -> Var {
    record_branches(x.value().data().iter().copied(), lo);
    record_branches(x.value().data().iter().copied(), hi);
    unary(x, x.value().map(|v| v.clamp(lo, hi)), move |xi, _| {
        if xi > lo && xi < hi {
            1.0
        } else {
            0.0
        }
    })
}

pub fn sum(x: &Var) -> Var {
    let shape = x.shape();
    Var::from_op(
        Tensor::scalar(x.value().sum()),
        vec![x.clone()],
        Box::new(move |ctx| vec![Some(Tensor::full(shape, ctx.grad.data()[0]))]),
    )
}

pub fn mean(x: &Var) -> Var {
    let n = x.value().numel() as f64;
    scale(&sum(x), 1.0 / n)
}

pub fn reshape(x: &Var, shape: Shape) -> Result<Var> {
    let from = x.shape();
    let value = x.value().reshape(shape)?;
    Ok(Var::from_op(
        value,
        vec![x.clone()],
        Box::new(move |ctx| vec![Some(ctx.grad.reshape(from).expect("same numel"))]),
    ))
}

/// Zero-padded 2-D convolution: `y[o,p] = Σ_c Σ_k w[o,c,k] · x[c, p·stride + k − padding] + b[o]`.
pub fn conv2d(x: &Var, weight: &Var, bias: Option<&Var>, stride: usize, padding: usize) -> Result<Var> {
    let xs = x.shape();
    let ws = weight.shape();
    kernels::check_conv(xs, ws, stride)?;
    if let Some(b) = bias {
        kernels::check_bias(b.shape(), ws)?;
    }
    kernels::conv_out_extent(xs.h, ws.h, stride, padding)?;
    kernels::conv_out_extent(xs.w, ws.w, stride, padding)?;
    let value = kernels::conv2d_forward(
        x.value(),
        weight.value(),
        bias.map(|b| b.value().data()),
        stride,
        padding,
    );
    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Ok(Var::from_op(
        value,
        parents,
        Box::new(move |ctx| {
            let gx = ctx.needs[0]
                .then(|| kernels::conv2d_backward_input(ctx.grad, ctx.inputs[1], xs, stride, padding));
            let gw = ctx.needs[1]
                .then(|| kernels::conv2d_backward_weight(ctx.grad, ctx.inputs[0], ws, stride, padding));
            let mut out = vec![gx, gw];
            if ctx.inputs.len() == 3 {
                out.push(ctx.needs[2].then(|| kernels::channel_sum(ctx.grad)));
            }
            out
        }),
    ))
}

/// Applies one `1×1×k×k` kernel independently to every channel (zero padding
/// `(k−1)/2`).
pub fn spatial_filter(x: &Var, kernel: &Var) -> Result<Var> {
    let s = x.shape();
    let ks = kernel.shape();
    if ks.n != 1 || ks.c != 1 {
        return Err(shape_err!("spatial filter must be 1x1xkxk, got {ks}"));
    }
    let planes = reshape(x, Shape::new(s.n * s.c, 1, s.h, s.w))?;
    let y = conv2d(&planes, kernel, None, 1, (ks.h - 1) / 2)?;
    reshape(&y, s)
}

/// Sums a kernel over its spatial taps: `C_out×C_in×k×k → C_out×C_in×1×1`.
pub fn sum_spatial(w: &Var) -> Var {
    let s = w.shape();
    let value = Tensor::from_fn(Shape::new(s.n, s.c, 1, 1), |o, c, _, _| {
        let start = s.index(o, c, 0, 0);
        w.value().data()[start..start + s.plane()].iter().sum()
    });
    Var::from_op(
        value,
        vec![w.clone()],
        Box::new(move |ctx| vec![Some(Tensor::from_fn(s, |o, c, _, _| ctx.grad.get(o, c, 0, 0)))]),
    )
}

pub fn avg_downsample2(x: &Var) -> Result<Var> {
    let xs = x.shape();
    let value = x.value().avg_downsample2()?;
    Ok(Var::from_op(
        value,
        vec![x.clone()],
        Box::new(move |ctx| vec![Some(kernels::avg_down2_backward(ctx.grad, xs))]),
    ))
}

pub fn upsample2_bilinear(x: &Var) -> Var {
    let xs = x.shape();
    Var::from_op(
        x.value().upsample2_bilinear(),
        vec![x.clone()],
        Box::new(move |ctx| vec![Some(kernels::upsample2_backward(ctx.grad, xs))]),
    )
}

/// Concatenates along the channel axis.
pub fn concat_channels(parts: &[&Var]) -> Result<Var> {
    let first = parts.first().ok_or_else(|| shape_err!("nothing to concatenate"))?.shape();
    for p in parts {
        let s = p.shape();
        if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
            return Err(shape_err!("cannot concatenate {s} with {first}"));
        }
    }
    let widths: Vec<usize> = parts.iter().map(|p| p.shape().c).collect();
    let total: usize = widths.iter().sum();
    let plane = first.plane();
    let out_shape = Shape::new(first.n, total, first.h, first.w);
    let mut data = Vec::with_capacity(out_shape.numel());
    for n in 0..first.n {
        for (p, &c) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.value().data()[n * c * plane..(n + 1) * c * plane]);
        }
    }
    let value = Tensor::from_vec(out_shape, data)?;
    Ok(Var::from_op(
        value,
        parts.iter().map(|&p| p.clone()).collect(),
        Box::new(move |ctx| {
            let mut grads: Vec<Vec<f64>> = widths.iter().map(|c| Vec::with_capacity(first.n * c * plane)).collect();
            let g = ctx.grad.data();
            let mut offset = 0;
            for _ in 0..first.n {
                for (buf, &c) in grads.iter_mut().zip(&widths) {
                    buf.extend_from_slice(&g[offset..offset + c * plane]);
                    offset += c * plane;
                }
            }
            grads
                .into_iter()
                .zip(&widths)
                .map(|(buf, &c)| Some(Tensor::from_vec(Shape::new(first.n, c, first.h, first.w), buf).unwrap()))
                .collect()
        }),
    ))
}

/// Repeats channels cyclically: output channel `c` copies input channel `c mod C_in`.
pub fn cycle_channels(x: &Var, channels: usize) -> Var {
    let s = x.shape();
    if channels == s.c {
        return x.clone();
    }
    let out_shape = Shape::new(s.n, channels, s.h, s.w);
    let value = Tensor::from_fn(out_shape, |n, c, h, w| x.value().get(n, c % s.c, h, w));
    Var::from_op(
        value,
        vec![x.clone()],
        Box::new(move |ctx| {
            let mut g = Tensor::zeros(s);
            for n in 0..s.n {
                for c in 0..channels {
                    let src = out_shape.index(n, c, 0, 0);
                    let dst = s.index(n, c % s.c, 0, 0);
                    let plane = s.plane();
                    let gs = &ctx.grad.data()[src..src + plane];
                    for (d, v) in g.data_mut()[dst..dst + plane].iter_mut().zip(gs) {
                        *d += v;
                    }
                }
            }
            vec![Some(g)]
        }),
    )
}

/// Per-pixel channel normalisation `x^c / Σ_v |x^v|`.
pub fn normalize_channels(x: &Var) -> Var {
    let s = x.shape();
    record_branches(x.value().data().iter().copied(), 0.0);
    let denom = Tensor::from_fn(Shape::new(s.n, 1, s.h, s.w), |n, _, h, w| {
        (0..s.c).map(|c| x.value().get(n, c, h, w).abs()).sum()
    });
    let value = Tensor::from_fn(s, |n, c, h, w| x.value().get(n, c, h, w) / denom.get(n, 0, h, w));
    Var::from_op(
        value,
        vec![x.clone()],
        Box::new(move |ctx| {
            // d(x_c/S)/dx_v = δ_cv/S − x_c·sign(x_v)/S²
            let mut g = Tensor::zeros(s);
            for n in 0..s.n {
                for h in 0..s.h {
                    for w in 0..s.w {
                        let sden = denom.get(n, 0, h, w);
                        let dot: f64 = (0..s.c)
                            .map(|c| ctx.grad.get(n, c, h, w) * ctx.output.get(n, c, h, w))
                            .sum();
                        for v in 0..s.c {
                            let xv = ctx.inputs[0].get(n, v, h, w);
                            let val = (ctx.grad.get(n, v, h, w) - dot * xv.signum()) / sden;
                            g.set(n, v, h, w, val);
                        }
                    }
                }
            }
            vec![Some(g)]
        }),
    )
}

/// Per-channel statistics computed by [`batch_norm`] in training mode.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Batch normalisation over (N, H, W) with affine `gamma`, `beta` of shape
/// `1×C×1×1`. Uses batch statistics (biased variance).
pub fn batch_norm(x: &Var, gamma: &Var, beta: &Var, eps: f64) -> Result<(Var, BatchStats)> {
    let s = x.shape();
    let param_shape = Shape::new(1, s.c, 1, 1);
    if gamma.shape() != param_shape || beta.shape() != param_shape {
        return Err(shape_err!("batch norm parameters must be {param_shape}"));
    }
    let count = (s.n * s.plane()) as f64;
    let plane = s.plane();
    let xd = x.value().data();
    let mut mean = vec![0.0; s.c];
    let mut var = vec![0.0; s.c];
    for c in 0..s.c {
        let channel = || (0..s.n).flat_map(|n| &xd[s.index(n, c, 0, 0)..s.index(n, c, 0, 0) + plane]);
        mean[c] = compensated_sum(channel().copied()) / count;
        var[c] = compensated_sum(channel().map(|v| (v - mean[c]).powi(2))) / count;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let xhat = Tensor::from_fn(s, |n, c, h, w| (x.value().get(n, c, h, w) - mean[c]) * inv_std[c]);
    let g = gamma.value().data().to_vec();
    let b = beta.value().data().to_vec();
    let value = Tensor::from_fn(s, |n, c, h, w| g[c] * xhat.get(n, c, h, w) + b[c]);
    let stats = BatchStats { mean, var };
    let out = Var::from_op(
        value,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |ctx| {
            let gamma = ctx.inputs[1].data();
            let mut dgamma = vec![0.0; s.c];
            let mut dbeta = vec![0.0; s.c];
            for c in 0..s.c {
                for n in 0..s.n {
                    let start = s.index(n, c, 0, 0);
                    let gs = &ctx.grad.data()[start..start + plane];
                    let xs = &xhat.data()[start..start + plane];
                    dbeta[c] += gs.iter().sum::<f64>();
                    dgamma[c] += gs.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let gx = ctx.needs[0].then(|| {
                Tensor::from_fn(s, |n, c, h, w| {
                    let gi = ctx.grad.get(n, c, h, w);
                    let xi = xhat.get(n, c, h, w);
                    gamma[c] * inv_std[c] * (gi - dbeta[c] / count - xi * dgamma[c] / count)
                })
            });
            vec![
                gx,
                Some(Tensor::from_vec(param_shape, dgamma).unwrap()),
                Some(Tensor::from_vec(param_shape, dbeta).unwrap()),
            ]
        }),
    );
    Ok((out, stats))
}

/// Batch normalisation with fixed statistics (inference mode).
pub fn batch_norm_fixed(x: &Var, gamma: &Var, beta: &Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
    let s = x.shape();
    let param_shape = Shape::new(1, s.c, 1, 1);
    if gamma.shape() != param_shape || beta.shape() != param_shape || mean.len() != s.c || var.len() != s.c {
        return Err(shape_err!("batch norm parameters must have {} channels", s.c));
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mean = mean.to_vec();
    let g = gamma.value().data();
    let b = beta.value().data();
    let value = Tensor::from_fn(s, |n, c, h, w| g[c] * (x.value().get(n, c, h, w) - mean[c]) * inv_std[c] + b[c]);
    Ok(Var::from_op(
        value,
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |ctx| {
            let gamma = ctx.inputs[1].data();
            let mut dgamma = vec![0.0; s.c];
            let mut dbeta = vec![0.0; s.c];
            let gx = Tensor::from_fn(s, |n, c, h, w| {
                let gi = ctx.grad.get(n, c, h, w);
                let xhat = (ctx.inputs[0].get(n, c, h, w) - mean[c]) * inv_std[c];
                dbeta[c] += gi;
                dgamma[c] += gi * xhat;
                gi * gamma[c] * inv_std[c]
            });
            vec![
                Some(gx),
                Some(Tensor::from_vec(param_shape, dgamma).unwrap()),
                Some(Tensor::from_vec(param_shape, dbeta).unwrap()),
            ]
        }),
    ))
}

/// `(1/n) Σ_{mask} (target − pred)²` with `n` the number of masked pixels.
pub fn masked_mse(pred: &Var, target: &Tensor, mask: &Tensor) -> Result<Var> {
    pred.value().expect_same_shape(target)?;
    pred.value().expect_same_shape(mask)?;
    let count = mask.data().iter().filter(|&&m| m > 0.0).count();
    if count == 0 {
        return Err(crate::Error::NoValidPixels);
    }
    let n = count as f64;
    let acc = compensated_sum(
        pred.value()
            .data()
            .iter()
            .zip(target.data())
            .zip(mask.data())
            .filter(|(_, &m)| m > 0.0)
            .map(|((&o, &d), _)| (d - o) * (d - o)),
    );
    let target = target.clone();
    let mask = mask.clone();
    Ok(Var::from_op(
        Tensor::scalar(acc / n),
        vec![pred.clone()],
        Box::new(move |ctx| {
            let g = ctx.grad.data()[0];
            let data = ctx.inputs[0]
                .data()
                .iter()
                .zip(target.data())
                .zip(mask.data())
                .map(|((&o, &d), &m)| if m > 0.0 { -2.0 * (d - o) * g / n } else { 0.0 })
                .collect();
            vec![Some(Tensor::from_vec(target.shape(), data).unwrap())]
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Var;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_, _, _, _| rng.random_range(lo..hi))
    }

    /// Central-difference check of d(sum(f(x) * probe))/dx.
    fn check_unary(f: impl Fn(&Var) -> Var, x: Tensor, tol: f64) {
        let probe = random(f(&Var::constant(x.clone())).shape(), 99, -1.0, 1.0);
        let loss = |t: &Tensor| {
            let y = f(&Var::constant(t.clone()));
            y.value().data().iter().zip(probe.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let xv = Var::parameter(x.clone());
        let y = f(&xv);
        sum(&mul(&y, &Var::constant(probe.clone())).unwrap()).backward().unwrap();
        let grad = xv.grad().unwrap().clone();
        let h = 1e-5;
        for i in 0..x.numel() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            let fd = (loss(&p) - loss(&m)) / (2.0 * h);
            let a = grad.data()[i];
            let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
            assert!(err < tol || (a - fd).abs() < 1e-9, "index {i}: analytic {a}, fd {fd}");
        }
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        let x = random(Shape::new(2, 2, 3, 3), 1, -2.0, 2.0);
        check_unary(|v| sigmoid(v), x.clone(), 1e-6);
        check_unary(|v| softplus(v), x.clone(), 1e-6);
        check_unary(|v| exp(v), x.clone(), 1e-6);
        check_unary(|v| square(v), x.clone(), 1e-6);
        check_unary(|v| normalize_channels(&exp(v)), x.clone(), 1e-6);
        check_unary(|v| cycle_channels(v, 5), x.clone(), 1e-6);
        check_unary(|v| sum_spatial(v), x.clone(), 1e-6);
        check_unary(|v| upsample2_bilinear(v), x.clone(), 1e-6);
        let even = random(Shape::new(1, 2, 4, 6), 2, -1.0, 1.0);
        check_unary(|v| avg_downsample2(v).unwrap(), even, 1e-6);
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let x = random(Shape::new(2, 3, 7, 6), 3, -1.0, 1.0);
        let w = random(Shape::new(4, 3, 3, 3), 4, -1.0, 1.0);
        let b = random(Shape::new(1, 4, 1, 1), 5, -1.0, 1.0);
        for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 0)] {
            let (wc, bc) = (w.clone(), b.clone());
            check_unary(
                move |v| conv2d(v, &Var::constant(wc.clone()), Some(&Var::constant(bc.clone())), stride, pad).unwrap(),
                x.clone(),
                1e-6,
            );
            let xc = x.clone();
            check_unary(
                move |v| conv2d(&Var::constant(xc.clone()), v, None, stride, pad).unwrap(),
                w.clone(),
                1e-6,
            );
        }
        let xc = x.clone();
        let wc = w.clone();
        check_unary(
            move |v| conv2d(&Var::constant(xc.clone()), &Var::constant(wc.clone()), Some(v), 1, 1).unwrap(),
            b,
            1e-6,
        );
        let k = random(Shape::new(1, 1, 5, 5), 6, -1.0, 1.0);
        check_unary(move |v| spatial_filter(v, &Var::constant(k.clone())).unwrap(), x.clone(), 1e-6);
        let xc = x.clone();
        check_unary(
            move |v| spatial_filter(&Var::constant(xc.clone()), v).unwrap(),
            random(Shape::new(1, 1, 3, 3), 7, -1.0, 1.0),
            1e-6,
        );
    }

    #[test]
    fn batch_norm_gradients_match_finite_differences() {
        let x = random(Shape::new(2, 3, 3, 2), 8, -1.0, 2.0);
        let gamma = random(Shape::new(1, 3, 1, 1), 9, 0.5, 1.5);
        let beta = random(Shape::new(1, 3, 1, 1), 10, -0.5, 0.5);
        let (g2, b2) = (gamma.clone(), beta.clone());
        check_unary(
            move |v| batch_norm(v, &Var::constant(g2.clone()), &Var::constant(b2.clone()), 1e-5).unwrap().0,
            x.clone(),
            1e-5,
        );
        let (x2, b2) = (x.clone(), beta.clone());
        check_unary(
            move |v| batch_norm(&Var::constant(x2.clone()), v, &Var::constant(b2.clone()), 1e-5).unwrap().0,
            gamma.clone(),
            1e-6,
        );
        let mean = vec![0.1, -0.2, 0.3];
        let var = vec![1.5, 0.5, 2.0];
        check_unary(
            move |v| {
                batch_norm_fixed(v, &Var::constant(gamma.clone()), &Var::constant(beta.clone()), &mean, &var, 1e-5)
                    .unwrap()
            },
            x,
            1e-6,
        );
    }

    #[test]
    fn concat_and_binary_gradients() {
        let a = random(Shape::new(2, 2, 3, 3), 11, 0.5, 2.0);
        let b = random(Shape::new(2, 3, 3, 3), 12, 0.5, 2.0);
        let bc = b.clone();
        check_unary(move |v| concat_channels(&[v, &Var::constant(bc.clone())]).unwrap(), a.clone(), 1e-6);
        let a2 = random(Shape::new(2, 2, 3, 3), 13, 0.5, 2.0);
        let c = a2.clone();
        check_unary(move |v| div(v, &Var::constant(c.clone())).unwrap(), a.clone(), 1e-6);
        let c = a2.clone();
        check_unary(move |v| div(&Var::constant(c.clone()), v).unwrap(), a.clone(), 1e-6);
        let c = a2.clone();
        check_unary(move |v| mul(v, &Var::constant(c.clone())).unwrap(), a, 1e-6);
    }

    #[test]
    fn masked_mse_requires_a_valid_pixel() {
        let o = Var::constant(Tensor::ones(Shape::new(1, 1, 2, 2)));
        let d = Tensor::ones(Shape::new(1, 1, 2, 2));
        let mask = Tensor::zeros(Shape::new(1, 1, 2, 2));
        assert!(matches!(masked_mse(&o, &d, &mask), Err(crate::Error::NoValidPixels)));
    }
}
