//! The dual-branch depth-completion network.
//!
//! Image branch: illumination estimation and Retinex enhancement, a five-scale
//! encoder, then IAICD guidance per scale with the illumination map pooled to
//! that scale. Depth branch: a five-scale encoder over `(sparse depth, mask)`
//! that fuses the guidance at every scale as `conv(g ⊙ f + f)`, followed by a
//! U-Net decoder and a softplus output head.

use serde::{Deserialize, Serialize};

use crate::autograd::{self as ag, BatchStats, Var};
use crate::diffconv::{iaicd_aggregated, Conv, IaicdMode, RicdConfig};
use crate::enhance::{estimate_illumination, retinex_enhance, EnhanceHead, IlluminationMap, ILLUMINATION_FLOOR};
use crate::error::{shape_err, Error, Result};
use crate::params::{Init, ParamSpec, ParamStore, ParamVars};
use crate::tensor::{Shape, Tensor};

pub const SCALES: usize = 5;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
const GUIDE_KERNEL: usize = 3;
/// Added to the head output so depth stays positive where softplus underflows.
pub const DEPTH_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Channel width at scales 1/1 … 1/16.
    pub widths: [usize; SCALES],
    pub ricd: RicdConfig,
    pub iaicd_mode: IaicdMode,
    /// Illumination estimation and enhancement in the image branch.
    pub use_ricd: bool,
    /// IAICD guidance; when off a plain 3×3 convolution produces the guidance.
    pub use_iaicd: bool,
    /// Learnable positive neighbour weights inside each IAICD window.
    pub learn_aggregation: bool,
    /// Stride 2 in the first encoder layer of both branches.
    pub halve_first_layer: bool,
    pub illumination_floor: f64,
    /// Depths are divided by this on input and the head output is multiplied by it.
    pub depth_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            widths: [16, 32, 64, 128, 256],
            ricd: RicdConfig::default(),
            iaicd_mode: IaicdMode::WindowRenormalized,
            use_ricd: true,
            use_iaicd: true,
            learn_aggregation: true,
            halve_first_layer: false,
            illumination_floor: ILLUMINATION_FLOOR,
            depth_scale: 10.0,
        }
    }
}

/// Which modules an ablation keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRicd,
    NoIaicd,
    Baseline,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no_ricd" => Ok(Self::NoRicd),
            "no_iaicd" => Ok(Self::NoIaicd),
            "baseline" => Ok(Self::Baseline),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

impl ModelConfig {
    pub fn with_variant(mut self, variant: Variant) -> Self {
        (self.use_ricd, self.use_iaicd) = match variant {
            Variant::Full => (true, true),
            Variant::NoRicd => (false, true),
            Variant::NoIaicd => (true, false),
            Variant::Baseline => (false, false),
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.use_ricd {
            self.ricd.validate()?;
        }
        if !(self.illumination_floor > 0.0 && self.illumination_floor < 1.0) {
            return Err(Error::Config("illumination floor must lie in (0, 1)".into()));
        }
        if !(self.depth_scale > 0.0) {
            return Err(Error::Config("depth scale must be positive".into()));
        }
        Ok(())
    }

    /// Spatial divisor the input extents must be a multiple of.
    pub fn divisor(&self) -> usize {
        if self.halve_first_layer {
            32
        } else {
            16
        }
    }

    /// Every parameter and buffer of the network, in initialisation order.
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let w = self.widths;
        let mut specs = Vec::new();
        if self.use_ricd {
            specs.extend(EnhanceHead::param_specs("enhance", &self.ricd));
        }
        for (branch, c_in) in [("image", 3), ("depth", 2)] {
            for s in 0..SCALES {
                let prev = if s == 0 { c_in } else { w[s - 1] };
                specs.extend(ParamSpec::conv(&format!("{branch}.enc{s}.conv"), prev, w[s], 3, false));
                specs.extend(ParamSpec::batch_norm(&format!("{branch}.enc{s}.bn"), w[s]));
            }
        }
        for s in 0..SCALES {
            if self.use_iaicd {
                specs.extend(ParamSpec::conv(&format!("guide{s}.iaicd"), w[s], w[s], GUIDE_KERNEL, true));
                if self.learn_aggregation {
                    specs.push(ParamSpec::new(
                        format!("guide{s}.aggregation"),
                        Shape::new(1, 1, GUIDE_KERNEL, GUIDE_KERNEL),
                        Init::Zeros,
                    ));
                }
            } else {
                specs.extend(ParamSpec::conv(&format!("guide{s}.conv"), w[s], w[s], GUIDE_KERNEL, true));
            }
            specs.extend(ParamSpec::conv(&format!("fuse{s}"), w[s], w[s], 3, true));
        }
        for s in (0..SCALES - 1).rev() {
            specs.extend(ParamSpec::conv(&format!("dec{s}.conv"), w[s + 1] + w[s], w[s], 3, false));
            specs.extend(ParamSpec::batch_norm(&format!("dec{s}.bn"), w[s]));
        }
        specs.extend(ParamSpec::conv("head", w[0], 1, 3, true));
        specs
    }
}

/// Softplus inverse of one: the head bias that makes the initial output equal `depth_scale`.
const HEAD_BIAS_INIT: f64 = 0.541_324_854_612_918_1;

/// All learnable kernels and normalisation buffers of both branches, keyed by path.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub store: ParamStore,
}

impl ModelParams {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero, drawn from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::init(&config.param_specs(), seed)?;
        store.get_mut("head.bias")?.data_mut().fill(HEAD_BIAS_INIT);
        Ok(Self { config, store })
    }

    pub fn vars(&self, track: bool) -> ParamVars {
        self.store.vars(track)
    }

    /// Folds batch statistics from a training forward pass into the running buffers.
    pub fn update_running_stats(&mut self, stats: &[(String, BatchStats, usize)]) -> Result<()> {
        for (prefix, batch, count) in stats {
            let unbias = if *count > 1 { *count as f64 / (*count - 1) as f64 } else { 1.0 };
            let mean = self.store.get_mut(&format!("{prefix}.running_mean"))?;
            for (r, b) in mean.data_mut().iter_mut().zip(&batch.mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b;
            }
            let var = self.store.get_mut(&format!("{prefix}.running_var"))?;
            for (r, b) in var.data_mut().iter_mut().zip(&batch.var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * unbias;
            }
        }
        Ok(())
    }
}

/// Batch statistics (training) or running statistics (evaluation).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Result of [`complete_depth`].
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Dense depth `N×1×H×W`, strictly positive.
    pub depth: Var,
    pub illumination: IlluminationMap,
    pub enhanced: Var,
    /// `(batch-norm prefix, batch statistics, element count per channel)` in training mode.
    pub batch_stats: Vec<(String, BatchStats, usize)>,
}

/// Evaluation context shared by the branch functions.
pub struct Network<'a> {
    pub config: &'a ModelConfig,
    pub vars: &'a ParamVars,
    pub mode: Mode,
    stats: std::cell::RefCell<Vec<(String, BatchStats, usize)>>,
}

impl<'a> Network<'a> {
    pub fn new(config: &'a ModelConfig, vars: &'a ParamVars, mode: Mode) -> Self {
        Self {
            config,
            vars,
            mode,
            stats: Default::default(),
        }
    }

    fn conv_bn_relu(&self, x: &Var, prefix: &str, stride: usize) -> Result<Var> {
        let conv = self.vars.conv(&format!("{prefix}.conv"))?;
        let y = conv.apply(x, stride, 1)?;
        let bn = format!("{prefix}.bn");
        let gamma = self.vars.get(&format!("{bn}.gamma"))?;
        let beta = self.vars.get(&format!("{bn}.beta"))?;
        let normed = match self.mode {
            Mode::Train => {
                let count = y.shape().n * y.shape().plane();
                let (out, stats) = ag::batch_norm(&y, gamma, beta, BN_EPS)?;
                self.stats.borrow_mut().push((bn, stats, count));
                out
            }
            Mode::Eval => {
                let mean = self.vars.get(&format!("{bn}.running_mean"))?.value().data().to_vec();
                let var = self.vars.get(&format!("{bn}.running_var"))?.value().data().to_vec();
                ag::batch_norm_fixed(&y, gamma, beta, &mean, &var, BN_EPS)?
            }
        };
        Ok(ag::relu(&normed))
    }

    fn check_extent(&self, s: Shape) -> Result<()> {
        let d = self.config.divisor();
        if s.h % d != 0 || s.w % d != 0 || s.h == 0 || s.w == 0 {
            return Err(shape_err!("input extent {}x{} must be a positive multiple of {d}", s.h, s.w));
        }
        Ok(())
    }

    fn encode(&self, branch: &str, input: &Var, mut fuse: impl FnMut(usize, Var) -> Result<Var>) -> Result<Vec<Var>> {
        let mut feats = Vec::with_capacity(SCALES);
        let mut f = input.clone();
        for s in 0..SCALES {
            let stride = if s == 0 && !self.config.halve_first_layer { 1 } else { 2 };
            f = self.conv_bn_relu(&f, &format!("{branch}.enc{s}"), stride)?;
            f = fuse(s, f)?;
            feats.push(f.clone());
        }
        Ok(feats)
    }

    /// Five-scale features of the (enhanced) image with widths `config.widths`.
    pub fn encode_image(&self, x_enh: &Var) -> Result<Vec<Var>> {
        self.check_extent(x_enh.shape())?;
        if x_enh.shape().c != 3 {
            return Err(shape_err!("image encoder expects 3 channels, got {}", x_enh.shape().c));
        }
        self.encode("image", x_enh, |_, f| Ok(f))
    }

    /// Guidance per scale: IAICD of the image feature with the illumination map
    /// average-pooled to the feature's resolution.
    pub fn guide_features(&self, image_feats: &[Var], m: &IlluminationMap) -> Result<Vec<Var>> {
        if image_feats.len() != SCALES {
            return Err(shape_err!("expected {SCALES} feature maps, got {}", image_feats.len()));
        }
        let mut pooled = m.values().clone();
        let mut out = Vec::with_capacity(SCALES);
        for (s, feat) in image_feats.iter().enumerate() {
            while pooled.shape().h > feat.shape().h {
                pooled = ag::avg_downsample2(&pooled)?;
            }
            if (pooled.shape().h, pooled.shape().w) != (feat.shape().h, feat.shape().w) {
                return Err(shape_err!("illumination {} cannot be pooled to {}", m.shape(), feat.shape()));
            }
            let g = if self.config.use_iaicd {
                let kern = self.vars.conv(&format!("guide{s}.iaicd"))?;
                let agg = if self.config.learn_aggregation {
                    Some(ag::exp(self.vars.get(&format!("guide{s}.aggregation"))?))
                } else {
                    None
                };
                iaicd_aggregated(feat, &kern, &pooled, agg.as_ref(), self.config.iaicd_mode)?
            } else {
                self.vars.conv(&format!("guide{s}.conv"))?.same(feat)?
            };
            out.push(g);
        }
        Ok(out)
    }

    fn fuse(&self, s: usize, feat: &Var, guide: &Var) -> Result<Var> {
        let mixed = ag::add(&ag::mul(guide, feat)?, feat)?;
        let conv: Conv = self.vars.conv(&format!("fuse{s}"))?;
        Ok(ag::relu(&conv.same(&mixed)?))
    }

    /// Full forward pass. `x` is `N×3×H×W` in `[0, 1]`, `sparse` and `valid`
    /// are `N×1×H×W`.
    pub fn complete_depth(&self, x: &Var, sparse: &Tensor, valid: &Tensor) -> Result<ForwardOutput> {
        let xs = x.shape();
        self.check_extent(xs)?;
        let ds = sparse.shape();
        if ds != Shape::new(xs.n, 1, xs.h, xs.w) || valid.shape() != ds {
            return Err(shape_err!("sparse depth {ds} / mask {} do not match image {xs}", valid.shape()));
        }
        if let Some(v) = sparse.data().iter().find(|&&v| !(v >= 0.0)) {
            return Err(Error::Domain(format!("sparse depth must be non-negative, found {v}")));
        }
        self.stats.borrow_mut().clear();

        let (illumination, enhanced) = if self.config.use_ricd {
            let head = EnhanceHead::from_params(self.vars, "enhance", self.config.ricd, self.config.illumination_floor)?;
            let m = estimate_illumination(x, &head)?;
            let e = retinex_enhance(x, &m)?;
            (m, e)
        } else {
            let ones = Var::constant(Tensor::ones(xs));
            (IlluminationMap::new(ones, self.config.illumination_floor)?, x.clone())
        };

        let image_feats = self.encode_image(&enhanced)?;
        let guides = self.guide_features(&image_feats, &illumination)?;

        let scaled = sparse.map(|d| d / self.config.depth_scale);
        let depth_in = ag::concat_channels(&[&Var::constant(scaled), &Var::constant(valid.clone())])?;
        let skips = self.encode("depth", &depth_in, |s, f| self.fuse(s, &f, &guides[s]))?;

        let mut u = skips[SCALES - 1].clone();
        for s in (0..SCALES - 1).rev() {
            let up = ag::upsample2_bilinear(&u);
            let cat = ag::concat_channels(&[&up, &skips[s]])?;
            u = self.conv_bn_relu(&cat, &format!("dec{s}"), 1)?;
        }
        if self.config.halve_first_layer {
            u = ag::upsample2_bilinear(&u);
        }
        let logits = self.vars.conv("head")?.same(&u)?;
        let depth = ag::add_scalar(&ag::scale(&ag::softplus(&logits), self.config.depth_scale), DEPTH_FLOOR);

        Ok(ForwardOutput {
            depth,
            illumination,
            enhanced,
            batch_stats: self.stats.take(),
        })
    }
}

/// Convenience wrapper: forward pass of `params` with untracked weights.
pub fn predict(params: &ModelParams, x: &Tensor, sparse: &Tensor, valid: &Tensor) -> Result<ForwardOutput> {
    let vars = params.vars(false);
    Network::new(&params.config, &vars, Mode::Eval).complete_depth(&Var::constant(x.clone()), sparse, valid)
}

/// Illumination map and Retinex-enhanced image of `x` (`N×3×H×W`). Models
/// without the enhancement head return `x` unchanged with a map of ones.
pub fn enhance(params: &ModelParams, x: &Tensor) -> Result<(Tensor, IlluminationMap)> {
    let cfg = &params.config;
    let xv = Var::constant(x.clone());
    if !cfg.use_ricd {
        let ones = IlluminationMap::new(Var::constant(Tensor::ones(x.shape())), cfg.illumination_floor)?;
        return Ok((x.clone(), ones));
    }
    let vars = params.vars(false);
    let head = EnhanceHead::from_params(&vars, "enhance", cfg.ricd, cfg.illumination_floor)?;
    let m = estimate_illumination(&xv, &head)?;
    let e = retinex_enhance(&xv, &m)?;
    Ok((e.value().clone(), m))
}

/// Validity mask (`1` where depth is positive) of a depth map.
pub fn validity_mask(depth: &Tensor) -> Tensor {
    depth.map(|d| if d > 0.0 { 1.0 } else { 0.0 })
}
