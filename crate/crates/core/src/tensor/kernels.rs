//! Loop kernels. Every accumulation runs in a fixed order so results are
//! bit-reproducible.

use super::{Shape, Tensor};
use crate::error::{shape_err, Error, Result};

pub(crate) fn check_kernel(w: Shape) -> Result<()> {
    if w.h != w.w {
        return Err(shape_err!("kernel must be square, got {}x{}", w.h, w.w));
    }
    if w.h % 2 == 0 {
        return Err(Error::Config(format!("kernel size {} must be odd", w.h)));
    }
    if !matches!(w.h, 1 | 3 | 5 | 7) {
        return Err(Error::Config(format!("kernel size {} not in {{1,3,5,7}}", w.h)));
    }
    Ok(())
}

pub(crate) fn check_bias(b: Shape, w: Shape) -> Result<()> {
    if b != Shape::new(1, w.n, 1, 1) {
        return Err(shape_err!("bias shape {b} does not match {} output channels", w.n));
    }
    Ok(())
}

pub(crate) fn check_conv(x: Shape, w: Shape, stride: usize) -> Result<()> {
    check_kernel(w)?;
    if stride == 0 {
        return Err(Error::Config("stride must be positive".into()));
    }
    if x.c != w.c {
        return Err(shape_err!("input has {} channels, kernel expects {}", x.c, w.c));
    }
    Ok(())
}

pub(crate) fn check_even(x: Shape) -> Result<()> {
    if x.h % 2 != 0 || x.w % 2 != 0 {
        return Err(shape_err!("extent {}x{} must be even", x.h, x.w));
    }
    Ok(())
}

pub(crate) fn conv_out_extent(input: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < k {
        return Err(shape_err!("input extent {input} with padding {pad} smaller than kernel {k}"));
    }
    Ok((padded - k) / stride + 1)
}

/// Output positions `o` in `[lo, hi)` for which `o * stride + tap - pad` lands inside `[0, len)`.
#[inline]
fn valid_range(tap: usize, pad: usize, stride: usize, len: usize, out_len: usize) -> (usize, usize) {
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    if len + pad <= tap {
        return (0, 0);
    }
    let hi = ((len - 1 + pad - tap) / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

pub(crate) fn conv2d_forward(
    x: &Tensor,
    w: &Tensor,
    bias: Option<&[f64]>,
    stride: usize,
    pad: usize,
) -> Tensor {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let oh = conv_out_extent(xs.h, k, stride, pad).expect("checked by caller");
    let ow = conv_out_extent(xs.w, k, stride, pad).expect("checked by caller");
    let out_shape = Shape::new(xs.n, ws.n, oh, ow);
    let mut out = vec![0.0; out_shape.numel()];
    let xd = x.data();
    let wd = w.data();
    let x_plane = xs.plane();
    let o_plane = oh * ow;

    let col: Vec<(usize, usize)> = (0..k).map(|kx| valid_range(kx, pad, stride, xs.w, ow)).collect();
    let row: Vec<(usize, usize)> = (0..k).map(|ky| valid_range(ky, pad, stride, xs.h, oh)).collect();

    for n in 0..xs.n {
        for o in 0..ws.n {
            let dst = &mut out[(n * ws.n + o) * o_plane..(n * ws.n + o + 1) * o_plane];
            if let Some(b) = bias {
                dst.iter_mut().for_each(|v| *v = b[o]);
            }
            for c in 0..xs.c {
                let src = &xd[(n * xs.c + c) * x_plane..(n * xs.c + c + 1) * x_plane];
                for ky in 0..k {
                    let (oy0, oy1) = row[ky];
                    for kx in 0..k {
                        let wv = wd[((o * ws.c + c) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = col[kx];
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            let drow = &mut dst[oy * ow + ox0..oy * ow + ox1];
                            let ix0 = ox0 * stride + kx - pad;
                            let srow = &src[iy * xs.w..(iy + 1) * xs.w];
                            if stride == 1 {
                                let s = &srow[ix0..ix0 + drow.len()];
                                for (d, &v) in drow.iter_mut().zip(s) {
                                    *d += wv * v;
                                }
                            } else {
                                for (j, d) in drow.iter_mut().enumerate() {
                                    *d += wv * srow[ix0 + j * stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out).expect("shape computed above")
}

pub(crate) fn conv2d_backward_input(
    grad_out: &Tensor,
    w: &Tensor,
    x_shape: Shape,
    stride: usize,
    pad: usize,
) -> Tensor {
    let gs = grad_out.shape();
    let ws = w.shape();
    let k = ws.h;
    let (oh, ow) = (gs.h, gs.w);
    let mut gin = vec![0.0; x_shape.numel()];
    let gd = grad_out.data();
    let wd = w.data();
    let x_plane = x_shape.plane();
    let o_plane = oh * ow;
    let col: Vec<(usize, usize)> =
        (0..k).map(|kx| valid_range(kx, pad, stride, x_shape.w, ow)).collect();
    let row: Vec<(usize, usize)> =
        (0..k).map(|ky| valid_range(ky, pad, stride, x_shape.h, oh)).collect();

    for n in 0..x_shape.n {
        for c in 0..x_shape.c {
            let dst = &mut gin[(n * x_shape.c + c) * x_plane..(n * x_shape.c + c + 1) * x_plane];
            for o in 0..ws.n {
                let src = &gd[(n * ws.n + o) * o_plane..(n * ws.n + o + 1) * o_plane];
                for ky in 0..k {
                    let (oy0, oy1) = row[ky];
                    for kx in 0..k {
                        let wv = wd[((o * ws.c + c) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = col[kx];
                        if ox0 >= ox1 {
                            continue;
                        }
                        for oy in oy0..oy1 {
                            let iy = oy * stride + ky - pad;
                            let grow = &src[oy * ow + ox0..oy * ow + ox1];
                            let ix0 = ox0 * stride + kx - pad;
                            let drow = &mut dst[iy * x_shape.w..(iy + 1) * x_shape.w];
                            if stride == 1 {
                                let d = &mut drow[ix0..ix0 + grow.len()];
                                for (d, &g) in d.iter_mut().zip(grow) {
                                    *d += wv * g;
                                }
                            } else {
                                for (j, &g) in grow.iter().enumerate() {
                                    drow[ix0 + j * stride] += wv * g;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(x_shape, gin).expect("input shape")
}

pub(crate) fn conv2d_backward_weight(
    grad_out: &Tensor,
    x: &Tensor,
    w_shape: Shape,
    stride: usize,
    pad: usize,
) -> Tensor {
    let gs = grad_out.shape();
    let xs = x.shape();
    let k = w_shape.h;
    let (oh, ow) = (gs.h, gs.w);
    let mut gw = vec![0.0; w_shape.numel()];
    let gd = grad_out.data();
    let xd = x.data();
    let x_plane = xs.plane();
    let o_plane = oh * ow;
    let col: Vec<(usize, usize)> = (0..k).map(|kx| valid_range(kx, pad, stride, xs.w, ow)).collect();
    let row: Vec<(usize, usize)> = (0..k).map(|ky| valid_range(ky, pad, stride, xs.h, oh)).collect();

    for o in 0..w_shape.n {
        for c in 0..w_shape.c {
            for ky in 0..k {
                let (oy0, oy1) = row[ky];
                for kx in 0..k {
                    let (ox0, ox1) = col[kx];
                    let mut acc = 0.0;
                    if ox0 < ox1 {
                        for n in 0..xs.n {
                            let g = &gd[(n * gs.c + o) * o_plane..(n * gs.c + o + 1) * o_plane];
                            let src = &xd[(n * xs.c + c) * x_plane..(n * xs.c + c + 1) * x_plane];
                            for oy in oy0..oy1 {
                                let iy = oy * stride + ky - pad;
                                let grow = &g[oy * ow + ox0..oy * ow + ox1];
                                let ix0 = ox0 * stride + kx - pad;
                                let srow = &src[iy * xs.w..(iy + 1) * xs.w];
                                if stride == 1 {
                                    let s = &srow[ix0..ix0 + grow.len()];
                                    acc += grow.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                                } else {
                                    for (j, &gv) in grow.iter().enumerate() {
                                        acc += gv * srow[ix0 + j * stride];
                                    }
                                }
                            }
                        }
                    }
                    gw[((o * w_shape.c + c) * k + ky) * k + kx] = acc;
                }
            }
        }
    }
    Tensor::from_vec(w_shape, gw).expect("weight shape")
}

/// Sum of `grad_out` over batch and space, shaped `1×C×1×1`.
pub(crate) fn channel_sum(grad_out: &Tensor) -> Tensor {
    let s = grad_out.shape();
    let mut acc = vec![0.0; s.c];
    for n in 0..s.n {
        for (c, a) in acc.iter_mut().enumerate() {
            let start = (n * s.c + c) * s.plane();
            *a += grad_out.data()[start..start + s.plane()].iter().sum::<f64>();
        }
    }
    Tensor::from_vec(Shape::new(1, s.c, 1, 1), acc).expect("bias shape")
}

pub(crate) fn avg_down2_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, s.h / 2, s.w / 2);
    Tensor::from_fn(out_shape, |n, c, h, w| {
        0.25 * (x.get(n, c, 2 * h, 2 * w)
            + x.get(n, c, 2 * h, 2 * w + 1)
            + x.get(n, c, 2 * h + 1, 2 * w)
            + x.get(n, c, 2 * h + 1, 2 * w + 1))
    })
}

pub(crate) fn avg_down2_backward(grad_out: &Tensor, x_shape: Shape) -> Tensor {
    Tensor::from_fn(x_shape, |n, c, h, w| 0.25 * grad_out.get(n, c, h / 2, w / 2))
}

/// Source taps and weight of the far tap for each output position along one axis.
fn bilinear_taps(len: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * len)
        .map(|i| {
            let src = ((i as f64 + 0.5) / 2.0 - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn upsample2_forward(x: &Tensor) -> Tensor {
    let s = x.shape();
    let ty = bilinear_taps(s.h);
    let tx = bilinear_taps(s.w);
    Tensor::from_fn(Shape::new(s.n, s.c, 2 * s.h, 2 * s.w), |n, c, h, w| {
        let (y0, y1, fy) = ty[h];
        let (x0, x1, fx) = tx[w];
        let top = (1.0 - fx) * x.get(n, c, y0, x0) + fx * x.get(n, c, y0, x1);
        let bottom = (1.0 - fx) * x.get(n, c, y1, x0) + fx * x.get(n, c, y1, x1);
        (1.0 - fy) * top + fy * bottom
    })
}

pub(crate) fn upsample2_backward(grad_out: &Tensor, x_shape: Shape) -> Tensor {
    let ty = bilinear_taps(x_shape.h);
    let tx = bilinear_taps(x_shape.w);
    let mut gin = Tensor::zeros(x_shape);
    let gs = grad_out.shape();
    for n in 0..gs.n {
        for c in 0..gs.c {
            for (h, &(y0, y1, fy)) in ty.iter().enumerate() {
                for (w, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let g = grad_out.get(n, c, h, w);
                    let add = |t: &mut Tensor, y, x, v: f64| {
                        let i = x_shape.index(n, c, y, x);
                        t.data_mut()[i] += v;
                    };
                    add(&mut gin, y0, x0, (1.0 - fy) * (1.0 - fx) * g);
                    add(&mut gin, y0, x1, (1.0 - fy) * fx * g);
                    add(&mut gin, y1, x0, fy * (1.0 - fx) * g);
                    add(&mut gin, y1, x1, fy * fx * g);
                }
            }
        }
    }
    gin
}
