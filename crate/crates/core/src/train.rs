//! Losses, Adam, the step schedule, the training loop and the
//! finite-difference gradient check.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{self as ag, branch_signature, Var};
use crate::checkpoint;
use crate::data::{collate, Batch, Dataset, RgbdSample, Split};
use crate::diffconv::IaicdMode;
use crate::enhance::{fidelity_loss, smoothness_loss};
use crate::error::{Error, Result};
use crate::model::{ForwardOutput, Mode, ModelConfig, ModelParams, Network, Variant};
use crate::metrics::{completion_metrics, MetricReport};
use crate::params::{ParamStore, ParamVars};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 0.15, beta: 0.3 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Config(format!("loss weights must be finite and non-negative, got {alpha}, {beta}")));
        }
        Ok(Self { alpha, beta })
    }
}

/// Mean squared depth error over the pixels where `valid` is non-zero.
pub fn l2_depth_loss(o: &Var, d: &Tensor, valid: &Tensor) -> Result<Var> {
    ag::masked_mse(o, d, valid)
}

/// `l2 + α·lf + β·ls`.
pub fn total_loss(l2: &Var, lf: &Var, ls: &Var, w: LossWeights) -> Result<Var> {
    ag::add(&ag::add(l2, &ag::scale(lf, w.alpha))?, &ag::scale(ls, w.beta))
}

/// Total loss of one forward pass with its scalar components.
pub struct LossTerms {
    pub total: Var,
    pub l2: f64,
    pub lf: f64,
    pub ls: f64,
}

/// Depth loss against `batch.gt`, plus the enhancement losses when the model
/// estimates illumination.
pub fn model_loss(out: &ForwardOutput, x: &Var, batch: &Batch, use_ricd: bool, w: LossWeights) -> Result<LossTerms> {
    let l2 = l2_depth_loss(&out.depth, &batch.gt, &batch.gt_valid)?;
    let (lf, ls) = if use_ricd {
        (fidelity_loss(&out.illumination, x)?, smoothness_loss(&out.illumination)?)
    } else {
        (Var::constant(Tensor::scalar(0.0)), Var::constant(Tensor::scalar(0.0)))
    };
    let total = total_loss(&l2, &lf, &ls, w)?;
    Ok(LossTerms {
        l2: l2.value().item()?,
        lf: lf.value().item()?,
        ls: ls.value().item()?,
        total,
    })
}

/// Adam with bias correction and coupled L2 weight decay.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
    pub step: u64,
    pub epoch: usize,
}

impl OptimState {
    pub fn new(store: &ParamStore, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Optim(format!("learning rate must be positive, got {lr}")));
        }
        let zeros: BTreeMap<_, _> = store
            .trainable_paths()
            .map(|p| (p.clone(), Tensor::zeros(store.get(p).unwrap().shape())))
            .collect();
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 1e-6,
            eps: 1e-8,
            m: zeros.clone(),
            v: zeros,
            step: 0,
            epoch: 0,
        })
    }
}

/// One Adam update of every trainable tensor in `store`.
pub fn adam_step(store: &mut ParamStore, grads: &BTreeMap<String, Tensor>, state: &mut OptimState) -> Result<()> {
    let paths: Vec<String> = store.trainable_paths().cloned().collect();
    for p in &paths {
        let g = grads.get(p).ok_or_else(|| Error::Optim(format!("no gradient for {p:?}")))?;
        if g.shape() != store.get(p)?.shape() {
            return Err(Error::Optim(format!("gradient of {p:?} has shape {}", g.shape())));
        }
        if !state.m.contains_key(p) {
            return Err(Error::Optim(format!("no moment buffers for {p:?}")));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for p in &paths {
        let g = &grads[p];
        let theta = store.get_mut(p)?;
        let m = state.m.get_mut(p).unwrap();
        let v = state.v.get_mut(p).unwrap();
        for (((th, &gi), mi), vi) in theta
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gi = gi + state.weight_decay * *th;
            *mi = state.beta1 * *mi + (1.0 - state.beta1) * gi;
            *vi = state.beta2 * *vi + (1.0 - state.beta2) * gi * gi;
            *th -= state.lr * (*mi / c1) / ((*vi / c2).sqrt() + state.eps);
        }
    }
    Ok(())
}

/// `initial_lr · 0.5^⌊epoch / 5⌋`.
pub fn lr_schedule(initial_lr: f64, epoch: usize) -> f64 {
    initial_lr * 0.5f64.powi((epoch / 5) as i32)
}

/// Training run settings; read from `key = value` text.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub loss: LossWeights,
    pub model: ModelConfig,
    pub manifest: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            epochs: 20,
            batch_size: 12,
            lr: 1e-3,
            loss: LossWeights::default(),
            model: ModelConfig::default(),
            manifest: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Keys accepted by [`TrainConfig::set`].
pub const CONFIG_KEYS: &[&str] = &[
    "seed",
    "epochs",
    "batch_size",
    "lr",
    "alpha",
    "beta",
    "ricd.k1",
    "ricd.k2",
    "ricd.steps",
    "ricd.hidden",
    "iaicd.mode",
    "iaicd.learn_aggregation",
    "model.widths",
    "model.variant",
    "model.halve_first_layer",
    "model.depth_scale",
    "data.manifest",
    "out.dir",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "alpha" => self.loss.alpha = parse(key, value)?,
            "beta" => self.loss.beta = parse(key, value)?,
            "ricd.k1" => m.ricd.k_large = parse(key, value)?,
            "ricd.k2" => m.ricd.k_small = parse(key, value)?,
            "ricd.steps" => m.ricd.steps = parse(key, value)?,
            "ricd.hidden" => m.ricd.hidden_channels = parse(key, value)?,
            "iaicd.mode" => m.iaicd_mode = parse::<IaicdMode>(key, value)?,
            "iaicd.learn_aggregation" => m.learn_aggregation = parse(key, value)?,
            "model.widths" => {
                let w: Vec<usize> = value.split(',').map(|s| parse(key, s.trim())).collect::<Result<_>>()?;
                m.widths = w
                    .try_into()
                    .map_err(|_| Error::Config("model.widths needs 5 comma-separated values".into()))?;
            }
            "model.variant" => *m = m.clone().with_variant(parse::<Variant>(key, value)?),
            "model.halve_first_layer" => m.halve_first_layer = parse(key, value)?,
            "model.depth_scale" => m.depth_scale = parse(key, value)?,
            "data.manifest" => self.manifest = Some(PathBuf::from(value)),
            "out.dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        LossWeights::new(self.loss.alpha, self.loss.beta)?;
        self.model.validate()
    }
}

/// Mean loss components over an epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossMeans {
    pub total: f64,
    pub l2: f64,
    pub lf: f64,
    pub ls: f64,
}

/// Forward, backward and one Adam update on `batch`; returns the loss before the update.
pub fn train_step(params: &mut ModelParams, state: &mut OptimState, batch: &Batch, w: LossWeights) -> Result<LossMeans> {
    let vars = params.vars(true);
    let net = Network::new(&params.config, &vars, Mode::Train);
    let x = Var::constant(batch.rgb.clone());
    let out = net.complete_depth(&x, &batch.sparse, &batch.sparse_valid)?;
    let terms = model_loss(&out, &x, batch, params.config.use_ricd, w)?;
    terms.total.backward()?;
    let grads = vars.grads();
    adam_step(&mut params.store, &grads, state)?;
    params.update_running_stats(&out.batch_stats)?;
    Ok(LossMeans {
        total: terms.total.value().item()?,
        l2: terms.l2,
        lf: terms.lf,
        ls: terms.ls,
    })
}

/// One pass over `samples` in a seeded shuffled order.
pub fn train_epoch(
    params: &mut ModelParams,
    state: &mut OptimState,
    samples: &[RgbdSample],
    batch_size: usize,
    seed: u64,
    w: LossWeights,
) -> Result<LossMeans> {
    if samples.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(state.epoch as u64);
    order.shuffle(&mut rng);
    let mut acc = LossMeans::default();
    let mut batches = 0;
    for chunk in order.chunks(batch_size) {
        let batch = collate(&chunk.iter().map(|&i| &samples[i]).collect::<Vec<_>>())?;
        let l = train_step(params, state, &batch, w)?;
        acc.total += l.total;
        acc.l2 += l.l2;
        acc.lf += l.lf;
        acc.ls += l.ls;
        batches += 1;
    }
    let n = batches as f64;
    Ok(LossMeans {
        total: acc.total / n,
        l2: acc.l2 / n,
        lf: acc.lf / n,
        ls: acc.ls / n,
    })
}

/// Dense predictions for `samples` in evaluation mode, in order.
pub fn predict_all(params: &ModelParams, samples: &[RgbdSample], batch_size: usize) -> Result<Vec<ForwardOutput>> {
    samples
        .chunks(batch_size.max(1))
        .map(|chunk| {
            let batch = collate(&chunk.iter().collect::<Vec<_>>())?;
            crate::model::predict(params, &batch.rgb, &batch.sparse, &batch.sparse_valid)
        })
        .collect()
}

/// Completion metrics pooled over every valid ground-truth pixel of `samples`.
pub fn evaluate(params: &ModelParams, samples: &[RgbdSample], batch_size: usize) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Data("no evaluation samples".into()));
    }
    let preds: Vec<Tensor> = predict_all(params, samples, batch_size)?
        .into_iter()
        .map(|o| o.depth.value().clone())
        .collect();
    let pred = Tensor::stack(&preds)?;
    let batch = collate(&samples.iter().collect::<Vec<_>>())?;
    completion_metrics(&pred, &batch.gt, &batch.gt_valid)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRecord {
    pub epoch: usize,
    pub split: &'static str,
    pub metric: String,
    pub value: f64,
}

pub const TRAIN_METRICS: [&str; 5] = ["lr", "loss_total", "loss_l2", "loss_fidelity", "loss_smoothness"];
pub const TEST_METRICS: [&str; 4] = ["rmse", "mae", "irmse", "imae"];

/// Log records written per epoch.
pub fn records_per_epoch(has_test: bool) -> usize {
    TRAIN_METRICS.len() + if has_test { TEST_METRICS.len() } else { 0 }
}

#[derive(Clone, Debug)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    pub train: LossMeans,
    pub test: Option<MetricReport>,
}

impl EpochSummary {
    pub fn records(&self) -> Vec<LogRecord> {
        let rec = |split, metric: &str, value| LogRecord {
            epoch: self.epoch,
            split,
            metric: metric.to_string(),
            value,
        };
        let t = &self.train;
        let mut out: Vec<_> = TRAIN_METRICS
            .iter()
            .zip([self.lr, t.total, t.l2, t.lf, t.ls])
            .map(|(m, v)| rec("train", m, v))
            .collect();
        if let Some(report) = &self.test {
            out.extend(TEST_METRICS.iter().map(|m| rec("test", m, report.get(m).unwrap_or(f64::NAN))));
        }
        out
    }
}

/// Initialises from `cfg.seed` and trains for `cfg.epochs`, calling
/// `on_epoch` after every epoch.
pub fn fit(
    cfg: &TrainConfig,
    train: &[RgbdSample],
    test: &[RgbdSample],
    mut on_epoch: impl FnMut(&EpochSummary, &ModelParams) -> Result<()>,
) -> Result<ModelParams> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let mut params = ModelParams::init(cfg.model.clone(), cfg.seed)?;
    let mut state = OptimState::new(&params.store, cfg.lr)?;
    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        state.lr = lr_schedule(cfg.lr, epoch);
        let losses = train_epoch(&mut params, &mut state, train, cfg.batch_size, cfg.seed, cfg.loss)?;
        let test = if test.is_empty() {
            None
        } else {
            Some(evaluate(&params, test, cfg.batch_size)?)
        };
        let summary = EpochSummary {
            epoch,
            lr: state.lr,
            train: losses,
            test,
        };
        on_epoch(&summary, &params)?;
    }
    Ok(params)
}

pub const LOG_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "model.ldck";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("epoch_{epoch:03}.ldck")
}

/// Output of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log_path: PathBuf,
    pub checkpoint: PathBuf,
    pub records: usize,
}

/// Trains on the manifest's train split, evaluating on its test split.
/// Writes `metrics.jsonl`, one checkpoint per epoch and `model.ldck` into
/// `cfg.out_dir`. Every log record is also passed to `sink`.
pub fn train(cfg: &TrainConfig, mut sink: impl FnMut(&LogRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = cfg
        .manifest
        .as_ref()
        .ok_or_else(|| Error::Config("data.manifest is not set".into()))?;
    let ds = Dataset::open(manifest)?;
    let train_set = ds.load_split(Split::Train)?;
    let test_set = ds.load_split(Split::Test)?;
    if train_set.is_empty() {
        return Err(Error::Data("manifest has no training samples".into()));
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join(LOG_FILE);
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);
    let mut records = 0;
    let params = fit(cfg, &train_set, &test_set, |summary, params| {
        for r in summary.records() {
            writeln!(log, "{}", serde_json::to_string(&r).expect("record serialises"))?;
            sink(&r);
            records += 1;
        }
        log.flush()?;
        checkpoint::save(params, cfg.out_dir.join(epoch_checkpoint_name(summary.epoch)))
    })?;
    let checkpoint = cfg.out_dir.join(FINAL_CHECKPOINT);
    checkpoint::save(&params, &checkpoint)?;
    Ok(TrainOutcome {
        params,
        log_path,
        checkpoint,
        records,
    })
}

/// Test RMSE of one model variant over several training seeds.
#[derive(Clone, Debug)]
pub struct AblationRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub rmse: Vec<f64>,
    pub median: f64,
    pub models: Vec<ModelParams>,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Trains every variant with every seed on the same data; `base.model` is
/// reshaped per variant. `progress` sees each finished epoch.
pub fn ablation(
    base: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    train: &[RgbdSample],
    test: &[RgbdSample],
    mut progress: impl FnMut(Variant, u64, &EpochSummary),
) -> Result<Vec<AblationRow>> {
    if test.is_empty() {
        return Err(Error::Data("ablation needs test samples".into()));
    }
    let mut rows = Vec::new();
    for &variant in variants {
        let mut rmse = Vec::new();
        let mut models = Vec::new();
        for &seed in seeds {
            let cfg = TrainConfig {
                seed,
                model: base.model.clone().with_variant(variant),
                ..base.clone()
            };
            let params = fit(&cfg, train, test, |s, _| {
                progress(variant, seed, s);
                Ok(())
            })?;
            let report = evaluate(&params, test, cfg.batch_size)?;
            rmse.push(report.get("rmse").expect("completion metrics include rmse"));
            models.push(params);
        }
        rows.push(AblationRow {
            variant,
            seeds: seeds.to_vec(),
            median: median(&rmse),
            rmse,
            models,
        });
    }
    Ok(rows)
}

/// Differences below this are treated as exact.
pub const GRADCHECK_ABS_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckEntry {
    pub path: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// False when a relu, clamp or absolute-value kink lies inside
    /// `[θ − h, θ + h]`, detected by comparing the branch signatures of the
    /// three evaluations. The central difference there approximates no
    /// derivative, so such entries are left out of the error statistics. The
    /// flag never looks at the analytic value.
    pub smooth: bool,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub h: f64,
    pub entries: Vec<GradcheckEntry>,
    /// Number of smooth entries the statistics cover.
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

impl GradcheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.checked > 0 && self.max_rel_error < tolerance
    }

    /// Smooth entry with the largest relative error.
    pub fn worst(&self) -> Option<&GradcheckEntry> {
        self.entries
            .iter()
            .filter(|e| e.smooth)
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

/// `|a − n| / max(|a|, |n|)`, or 0 when `|a − n| < GRADCHECK_ABS_TOL`.
pub fn gradcheck_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff < GRADCHECK_ABS_TOL {
        0.0
    } else {
        diff / analytic.abs().max(numeric.abs())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GradcheckOptions {
    pub h: f64,
    pub per_tensor: usize,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            h: 1e-5,
            per_tensor: 50,
            seed: 0,
        }
    }
}

/// Central differences `(L(θ+h) − L(θ−h)) / 2h` against the analytic
/// gradient for up to `per_tensor` seeded entries of every trainable tensor.
pub fn gradcheck(
    store: &ParamStore,
    loss: impl Fn(&ParamVars) -> Result<Var>,
    opts: GradcheckOptions,
) -> Result<GradcheckReport> {
    if !(opts.h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {}", opts.h)));
    }
    let vars = store.vars(true);
    loss(&vars)?.backward()?;
    let grads = vars.grads();
    drop(vars);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = store.clone();
    let eval = |probe: &ParamStore| -> Result<(f64, u64)> {
        let (l, sig) = branch_signature(|| loss(&probe.vars(false)));
        Ok((l?.value().item()?, sig))
    };
    let (_, base) = eval(store)?;
    let mut entries = Vec::new();
    for path in store.trainable_paths() {
        let numel = store.get(path)?.numel();
        let mut picks = index::sample(&mut rng, numel, opts.per_tensor.min(numel)).into_vec();
        picks.sort_unstable();
        for i in picks {
            let orig = store.get(path)?.data()[i];
            probe.get_mut(path)?.data_mut()[i] = orig + opts.h;
            probe.get_mut(path)?.data_mut()[i] = orig + opts.h;
            let (plus, sig_plus) = eval(&probe)?;
            probe.get_mut(path)?.data_mut()[i] = orig - opts.h;
            let (minus, sig_minus) = eval(&probe)?;
            probe.get_mut(path)?.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.h);
            let analytic = grads[path].data()[i];
            entries.push(GradcheckEntry {
                path: path.clone(),
                index: i,
                analytic,
                numeric,
                smooth: sig_plus == base && sig_minus == base,
                rel_error: gradcheck_error(analytic, numeric),
            });
        }
    }
    let smooth: Vec<f64> = entries.iter().filter(|e| e.smooth).map(|e| e.rel_error).collect();
    let max = smooth.iter().copied().fold(0.0, f64::max);
    let mean = smooth.iter().sum::<f64>() / smooth.len().max(1) as f64;
    Ok(GradcheckReport {
        h: opts.h,
        checked: smooth.len(),
        skipped_kinks: entries.len() - smooth.len(),
        entries,
        max_rel_error: max,
        mean_rel_error: mean,
    })
}

/// Gradient check of the full training loss (batch statistics) on `batch`.
pub fn model_gradcheck(params: &ModelParams, batch: &Batch, w: LossWeights, opts: GradcheckOptions) -> Result<GradcheckReport> {
    let cfg = &params.config;
    gradcheck(
        &params.store,
        |vars| {
            let net = Network::new(cfg, vars, Mode::Train);
            let x = Var::constant(batch.rgb.clone());
            let out = net.complete_depth(&x, &batch.sparse, &batch.sparse_valid)?;
            Ok(model_loss(&out, &x, batch, cfg.use_ricd, w)?.total)
        },
        opts,
    )
}
