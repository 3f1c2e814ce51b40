//! Differencing convolutions.
//!
//! * [`cdc_forward`]: central differencing mixed with vanilla convolution by `theta`,
//!   evaluated as `conv(x) − theta · x[p₀] · Σω`.
//! * [`ricd_step`]: difference of a large-kernel and a small-kernel convolution
//!   sharing the same centre location.
//! * [`iaicd_forward`]: differencing against a centre aggregated from the whole
//!   window, each neighbour weighted by the channel-normalised illumination.

use serde::{Deserialize, Serialize};

use crate::autograd::{self as ag, Var};
use crate::error::{shape_err, Error, Result};
use crate::tensor::{kernels, ConvKernel, Shape, Tensor};

/// Weights and optional bias of a convolution inside a recorded graph.
#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: Var,
    pub bias: Option<Var>,
}

impl Conv {
    pub fn new(weight: Var, bias: Option<Var>) -> Result<Self> {
        kernels::check_kernel(weight.shape())?;
        if let Some(b) = &bias {
            kernels::check_bias(b.shape(), weight.shape())?;
        }
        Ok(Self { weight, bias })
    }

    /// Untracked copy of a [`ConvKernel`].
    pub fn constant(kern: &ConvKernel) -> Self {
        Self {
            weight: Var::constant(kern.weight.clone()),
            bias: kern.bias.clone().map(Var::constant),
        }
    }

    /// Tracked copy of a [`ConvKernel`]; gradients land on the returned vars.
    pub fn parameter(kern: &ConvKernel) -> Self {
        Self {
            weight: Var::parameter(kern.weight.clone()),
            bias: kern.bias.clone().map(Var::parameter),
        }
    }

    pub fn size(&self) -> usize {
        self.weight.shape().h
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape().c
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape().n
    }

    pub fn apply(&self, x: &Var, stride: usize, padding: usize) -> Result<Var> {
        ag::conv2d(x, &self.weight, self.bias.as_ref(), stride, padding)
    }

    /// Stride 1 with `(k−1)/2` zero padding.
    pub fn same(&self, x: &Var) -> Result<Var> {
        self.apply(x, 1, (self.size() - 1) / 2)
    }
}

/// Mixing weight between central differencing (`theta = 1`) and vanilla convolution (`theta = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdcConfig {
    theta: f64,
}

impl CdcConfig {
    pub fn new(theta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Config(format!("theta {theta} outside [0, 1]")));
        }
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }
}

/// Kernel pair, recurrence depth and feature width of the recurrent
/// inter-convolution differencing head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RicdConfig {
    pub k_large: usize,
    pub k_small: usize,
    pub steps: usize,
    pub hidden_channels: usize,
}

impl Default for RicdConfig {
    fn default() -> Self {
        Self {
            k_large: 5,
            k_small: 3,
            steps: 3,
            hidden_channels: 16,
        }
    }
}

impl RicdConfig {
    pub fn validate(&self) -> Result<()> {
        let odd = |k: usize| k % 2 == 1 && k <= 7;
        if !odd(self.k_large) || !odd(self.k_small) {
            return Err(Error::Config(format!(
                "RICD kernels must be odd and at most 7, got {} and {}",
                self.k_large, self.k_small
            )));
        }
        if self.k_large <= self.k_small {
            return Err(Error::Config(format!(
                "RICD large kernel {} must exceed small kernel {}",
                self.k_large, self.k_small
            )));
        }
        if self.steps == 0 || self.hidden_channels == 0 {
            return Err(Error::Config("RICD steps and hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// How IAICD turns the normalised illumination into window weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IaicdMode {
    /// Weights rescaled to sum to one inside every window (convex centre).
    #[default]
    WindowRenormalized,
    /// Channel-normalised illumination used as-is.
    Literal,
}

impl std::str::FromStr for IaicdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "window_renormalized" | "window" => Ok(Self::WindowRenormalized),
            "literal" => Ok(Self::Literal),
            other => Err(Error::Config(format!("unknown IAICD mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for IaicdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::WindowRenormalized => "window_renormalized",
            Self::Literal => "literal",
        })
    }
}

/// Illumination normalised across channels: `M^c = m^c / Σ_v |m^v|`.
#[derive(Clone, Debug)]
pub struct NormalizedIllumination {
    pub values: Var,
    pub mode: IaicdMode,
}

impl NormalizedIllumination {
    /// Weights of the `k×k` window centred at `(h, w)` for feature channel
    /// `channel`, row-major over the window. Out-of-image taps are zero.
    pub fn window_weights(
        &self,
        n: usize,
        channel: usize,
        h: usize,
        w: usize,
        k: usize,
        aggregation: Option<&Tensor>,
    ) -> Vec<f64> {
        let m = self.values.value();
        let s = m.shape();
        let r = (k / 2) as isize;
        let mut out = Vec::with_capacity(k * k);
        for dy in -r..=r {
            for dx in -r..=r {
                let (y, x) = (h as isize + dy, w as isize + dx);
                let inside = y >= 0 && x >= 0 && (y as usize) < s.h && (x as usize) < s.w;
                let a = aggregation.map_or(1.0, |a| a.get(0, 0, (dy + r) as usize, (dx + r) as usize));
                out.push(if inside {
                    a * m.get(n, channel % s.c, y as usize, x as usize)
                } else {
                    0.0
                });
            }
        }
        if self.mode == IaicdMode::WindowRenormalized {
            let total: f64 = out.iter().sum();
            out.iter_mut().for_each(|v| *v /= total);
        }
        out
    }
}

/// `theta · CDC(x) + (1 − theta) · conv(x)` at stride 1, "same" padding.
pub fn cdc_forward(x: &Var, kern: &Conv, cfg: CdcConfig) -> Result<Var> {
    let vanilla = kern.same(x)?;
    if cfg.theta == 0.0 {
        return Ok(vanilla);
    }
    let kernel_sum = ag::sum_spatial(&kern.weight);
    let centre = ag::conv2d(x, &kernel_sum, None, 1, 0)?;
    ag::sub(&vanilla, &ag::scale(&centre, cfg.theta))
}

/// One recurrent inter-convolution differencing step:
/// `conv_large(x) − conv_small(x)`, both at stride 1 with "same" padding.
pub fn ricd_step(x: &Var, large: &Conv, small: &Conv) -> Result<Var> {
    if large.in_channels() != small.in_channels() || large.out_channels() != small.out_channels() {
        return Err(shape_err!(
            "RICD kernels disagree on channels: {}->{} vs {}->{}",
            large.in_channels(),
            large.out_channels(),
            small.in_channels(),
            small.out_channels()
        ));
    }
    ag::sub(&large.same(x)?, &small.same(x)?)
}

/// Channel-wise normalisation of a strictly positive illumination map.
pub fn normalize_illumination(m: &Var, mode: IaicdMode) -> Result<NormalizedIllumination> {
    if let Some(bad) = m.value().data().iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::Domain(format!("illumination must be positive, found {bad}")));
    }
    Ok(NormalizedIllumination {
        values: ag::normalize_channels(m),
        mode,
    })
}

/// Illumination-affinitive intra-convolution differencing with uniform
/// neighbour aggregation.
pub fn iaicd_forward(x: &Var, kern: &Conv, m: &Var, mode: IaicdMode) -> Result<Var> {
    iaicd_aggregated(x, kern, m, None, mode)
}

/// IAICD with an optional positive `1×1×k×k` aggregation kernel `a`:
/// the centre at `p₀` is `Σ_n a_n · M(p₀+p_n) · x(p₀+p_n)`, divided by
/// `Σ_n a_n · M(p₀+p_n)` in window-renormalised mode. Feature channel `c`
/// reads illumination channel `c mod C_m`.
pub fn iaicd_aggregated(
    x: &Var,
    kern: &Conv,
    m: &Var,
    aggregation: Option<&Var>,
    mode: IaicdMode,
) -> Result<Var> {
    let xs = x.shape();
    let ms = m.shape();
    if (xs.n, xs.h, xs.w) != (ms.n, ms.h, ms.w) {
        return Err(shape_err!("illumination {ms} does not match features {xs} spatially"));
    }
    if kern.in_channels() != xs.c {
        return Err(shape_err!("kernel expects {} channels, features have {}", kern.in_channels(), xs.c));
    }
    let k = kern.size();
    let uniform;
    let agg = match aggregation {
        Some(a) => {
            if a.shape() != Shape::new(1, 1, k, k) {
                return Err(shape_err!("aggregation must be 1x1x{k}x{k}, got {}", a.shape()));
            }
            a
        }
        None => {
            uniform = Var::constant(Tensor::ones(Shape::new(1, 1, k, k)));
            &uniform
        }
    };
    let norm = normalize_illumination(m, mode)?;
    let weights = ag::cycle_channels(&norm.values, xs.c);
    let numerator = ag::spatial_filter(&ag::mul(&weights, x)?, agg)?;
    let centre = match mode {
        IaicdMode::WindowRenormalized => ag::div(&numerator, &ag::spatial_filter(&weights, agg)?)?,
        IaicdMode::Literal => numerator,
    };
    let vanilla = kern.same(x)?;
    let kernel_sum = ag::sum_spatial(&kern.weight);
    ag::sub(&vanilla, &ag::conv2d(&centre, &kernel_sum, None, 1, 0)?)
}
