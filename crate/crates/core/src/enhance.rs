//! Retinex enhancement head: recurrent inter-convolution differencing
//! estimates an illumination map `m`, the image is brightened as `x ⊘ m`, and
//! `m` is trained with fidelity and smoothness losses.

use crate::autograd::{self as ag, Var};
use crate::diffconv::{ricd_step, Conv, RicdConfig};
use crate::error::{shape_err, Error, Result};
use crate::params::{ParamSpec, ParamVars};
use crate::tensor::{compensated_sum, Shape, Tensor};

/// Default lower bound of the illumination map.
pub const ILLUMINATION_FLOOR: f64 = 0.01;

/// Side of the smoothness window.
pub const SMOOTHNESS_WINDOW: usize = 5;

/// Standard deviation of the smoothness Gaussian, in pixels.
pub const SMOOTHNESS_SIGMA: f64 = 1.0;

/// Per-pixel, per-channel illumination in `[floor, 1]`.
#[derive(Clone, Debug)]
pub struct IlluminationMap {
    values: Var,
    floor: f64,
}

impl IlluminationMap {
    pub fn new(values: Var, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor <= 1.0) {
            return Err(Error::Config(format!("illumination floor {floor} outside (0, 1]")));
        }
        let tol = 1e-12;
        if let Some(v) = values.value().data().iter().find(|&&v| !(v >= floor - tol && v <= 1.0 + tol)) {
            return Err(Error::Domain(format!("illumination value {v} outside [{floor}, 1]")));
        }
        Ok(Self { values, floor })
    }

    pub fn values(&self) -> &Var {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn shape(&self) -> Shape {
        self.values.shape()
    }
}

/// Kernels of the illumination estimator: an input projection to the hidden
/// width, one large/small kernel pair per recurrent step, and a `1×1` output
/// projection to three channels.
#[derive(Clone, Debug)]
pub struct EnhanceHead {
    pub cfg: RicdConfig,
    pub floor: f64,
    pub input: Conv,
    pub steps: Vec<(Conv, Conv)>,
    pub output: Conv,
}

impl EnhanceHead {
    pub fn param_specs(prefix: &str, cfg: &RicdConfig) -> Vec<ParamSpec> {
        let hid = cfg.hidden_channels;
        let mut specs = ParamSpec::conv(&format!("{prefix}.input"), 3, hid, 3, true);
        for t in 0..cfg.steps {
            specs.extend(ParamSpec::conv(&format!("{prefix}.step{t}.large"), hid, hid, cfg.k_large, true));
            specs.extend(ParamSpec::conv(&format!("{prefix}.step{t}.small"), hid, hid, cfg.k_small, true));
        }
        specs.extend(ParamSpec::conv(&format!("{prefix}.output"), hid, 3, 1, true));
        specs
    }

    pub fn from_params(vars: &ParamVars, prefix: &str, cfg: RicdConfig, floor: f64) -> Result<Self> {
        let steps = (0..cfg.steps)
            .map(|t| {
                Ok((
                    vars.conv(&format!("{prefix}.step{t}.large"))?,
                    vars.conv(&format!("{prefix}.step{t}.small"))?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            cfg,
            floor,
            vars.conv(&format!("{prefix}.input"))?,
            steps,
            vars.conv(&format!("{prefix}.output"))?,
        )
    }

    pub fn new(cfg: RicdConfig, floor: f64, input: Conv, steps: Vec<(Conv, Conv)>, output: Conv) -> Result<Self> {
        cfg.validate()?;
        if steps.len() != cfg.steps {
            return Err(Error::Config(format!("{} kernel pairs for {} RICD steps", steps.len(), cfg.steps)));
        }
        if input.in_channels() != 3 || output.out_channels() != 3 {
            return Err(shape_err!("enhancement head must map 3 channels to 3 channels"));
        }
        Ok(Self {
            cfg,
            floor,
            input,
            steps,
            output,
        })
    }
}

/// `m = ε + (1 − ε) · sigmoid(out(f_T))` with `f_0 = in(x)` and
/// `f_t = relu(ricd_step(f_{t−1}))`.
pub fn estimate_illumination(x: &Var, head: &EnhanceHead) -> Result<IlluminationMap> {
    if x.shape().c != 3 {
        return Err(shape_err!("illumination estimation needs 3 channels, got {}", x.shape().c));
    }
    let mut f = head.input.same(x)?;
    for (large, small) in &head.steps {
        f = ag::relu(&ricd_step(&f, large, small)?);
    }
    let logits = head.output.same(&f)?;
    let eps = head.floor;
    let m = ag::add_scalar(&ag::scale(&ag::sigmoid(&logits), 1.0 - eps), eps);
    IlluminationMap::new(m, eps)
}

/// `clamp(x ⊘ m, 0, 1)`.
pub fn retinex_enhance(x: &Var, m: &IlluminationMap) -> Result<Var> {
    x.value().expect_same_shape(m.values.value())?;
    if let Some(v) = m.values.value().data().iter().find(|&&v| v < m.floor - 1e-12) {
        return Err(Error::Domain(format!("illumination {v} below floor {}", m.floor)));
    }
    Ok(ag::clamp(&ag::div(x, &m.values)?, 0.0, 1.0))
}

/// `(1/n) Σ (m − x)²` over all elements.
pub fn fidelity_loss(m: &IlluminationMap, x: &Var) -> Result<Var> {
    if x.value().numel() == 0 {
        return Err(Error::Domain("fidelity loss of an empty tensor".into()));
    }
    Ok(ag::mean(&ag::square(&ag::sub(&m.values, x)?)))
}

/// Gaussian weights of the window around `(h, w)`, normalised over the
/// in-image taps. Row-major over the window; out-of-image taps are zero.
pub fn smoothness_weights(h: usize, w: usize, height: usize, width: usize) -> [f64; SMOOTHNESS_WINDOW * SMOOTHNESS_WINDOW] {
    let r = (SMOOTHNESS_WINDOW / 2) as isize;
    let mut out = [0.0; SMOOTHNESS_WINDOW * SMOOTHNESS_WINDOW];
    let mut total = 0.0;
    for dy in -r..=r {
        for dx in -r..=r {
            let (y, x) = (h as isize + dy, w as isize + dx);
            if y >= 0 && x >= 0 && (y as usize) < height && (x as usize) < width {
                let g = (-((dy * dy + dx * dx) as f64) / (2.0 * SMOOTHNESS_SIGMA * SMOOTHNESS_SIGMA)).exp();
                out[((dy + r) * SMOOTHNESS_WINDOW as isize + dx + r) as usize] = g;
                total += g;
            }
        }
    }
    out.iter_mut().for_each(|g| *g /= total);
    out
}

/// `(1/n) Σ_i Σ_{j ∈ N(i)} G_ij |m_i − m_j|` with `N(i)` the 5×5 window
/// around `i` in the same channel.
pub fn smoothness_loss(m: &IlluminationMap) -> Result<Var> {
    let s = m.shape();
    if s.h < SMOOTHNESS_WINDOW || s.w < SMOOTHNESS_WINDOW {
        return Err(Error::Domain(format!(
            "smoothness needs at least {SMOOTHNESS_WINDOW}x{SMOOTHNESS_WINDOW} pixels, got {}x{}",
            s.h, s.w
        )));
    }
    let weights: Vec<_> = (0..s.h)
        .flat_map(|h| (0..s.w).map(move |w| smoothness_weights(h, w, s.h, s.w)))
        .collect();
    let r = (SMOOTHNESS_WINDOW / 2) as isize;
    let n = s.numel() as f64;
    // Calls f(i, j, G_ij) for every in-image neighbour pair, in a fixed order.
    let visit = move |f: &mut dyn FnMut(usize, usize, f64)| {
        for plane in 0..s.n * s.c {
            let base = plane * s.plane();
            for h in 0..s.h {
                for w in 0..s.w {
                    let i = base + h * s.w + w;
                    let g = &weights[h * s.w + w];
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let gij = g[((dy + r) * SMOOTHNESS_WINDOW as isize + dx + r) as usize];
                            if gij == 0.0 || (dy == 0 && dx == 0) {
                                continue;
                            }
                            let j = base + (h as isize + dy) as usize * s.w + (w as isize + dx) as usize;
                            f(i, j, gij);
                        }
                    }
                }
            }
        }
    };
    let d = m.values.value().data();
    let mut terms = Vec::new();
    let mut diffs = Vec::new();
    visit(&mut |i, j, gij| {
        terms.push(gij * (d[i] - d[j]).abs());
        diffs.push(d[i] - d[j]);
    });
    ag::record_branches(diffs.into_iter(), 0.0);
    let total = compensated_sum(terms);
    Ok(Var::from_op(
        Tensor::scalar(total / n),
        vec![m.values.clone()],
        Box::new(move |ctx| {
            let scale = ctx.grad.data()[0] / n;
            let d = ctx.inputs[0].data();
            let mut g = vec![0.0; d.len()];
            // sign(0) = 0
            visit(&mut |i, j, gij| {
                let step = gij * (d[i] - d[j]).signum() * scale;
                if d[i] != d[j] {
                    g[i] += step;
                    g[j] -= step;
                }
            });
            vec![Some(Tensor::from_vec(s, g).unwrap())]
        }),
    ))
}
