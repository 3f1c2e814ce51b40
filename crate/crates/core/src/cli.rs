//! Command-line front end. Machine-readable JSON lines go to stdout, human
//! messages to stderr. Flags override keys read from `--config`.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 failed check.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::checkpoint;
use crate::data::{build_dataset, collate, read_pfm, read_ppm, write_pfm, write_ppm, Dataset, SceneConfig, Split};
use crate::error::{Error, Result};
use crate::metrics::{completion_metrics, estimation_metrics};
use crate::model::{self, ModelConfig, ModelParams};
use crate::tensor::Tensor;
use crate::train::{self, GradcheckOptions, LossWeights, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ldcnet", version, about = "Low-light depth completion with differencing convolutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic night-time RGB-D dataset and its manifest.
    GenData(GenDataArgs),
    /// Train a model on a dataset manifest.
    Train(TrainArgs),
    /// Brighten a PPM image with a checkpoint's illumination estimate.
    Enhance(EnhanceArgs),
    /// Predict dense depth for one image or for a manifest's test split.
    Complete(CompleteArgs),
    /// Score predicted depth maps against a manifest's ground truth.
    Eval(EvalArgs),
    /// Compare analytic and finite-difference gradients of the full loss.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// `key = value` file with scene keys plus `count` and `out.dir`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    /// Any scene key, repeatable: `--set noise_std=0.02`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key = value` training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Any training key, repeatable: `--set model.variant=no_ricd`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also write the channel-mean illumination map as PFM.
    #[arg(long)]
    illum: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompleteArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, requires_all = ["sparse", "out"], conflicts_with = "manifest")]
    rgb: Option<PathBuf>,
    #[arg(long)]
    sparse: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Predict every sample of the test split into `--out-dir/<id>.pfm`.
    #[arg(long, requires = "out_dir")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Directory holding `<id>.pfm` for every sample of the split.
    #[arg(long)]
    pred_dir: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "test"])]
    split: String,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Check this checkpoint instead of a freshly initialised model.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    batch: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 1e-5)]
    h: f64,
    #[arg(long, default_value_t = 50)]
    per_tensor: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Channel widths of the fresh model.
    #[arg(long, default_value = "4,8,8,16,16")]
    widths: String,
}

/// Runs one command; returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a, &mut io),
        Command::Train(a) => train_cmd(a, &mut io),
        Command::Enhance(a) => enhance_cmd(a, &mut io),
        Command::Complete(a) => complete_cmd(a, &mut io),
        Command::Eval(a) => eval_cmd(a, &mut io),
        Command::Gradcheck(a) => gradcheck_cmd(a, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.err, "error: {e}");
            match e {
                Error::Config(_) => EXIT_USAGE,
                _ => EXIT_DATA,
            }
        }
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Io<'_> {
    fn json(&mut self, value: serde_json::Value) -> Result<()> {
        writeln!(self.out, "{value}")?;
        Ok(())
    }

    fn say(&mut self, msg: impl std::fmt::Display) -> Result<()> {
        writeln!(self.err, "{msg}")?;
        Ok(())
    }
}

fn split_kv(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| Error::Config(format!("expected KEY=VALUE, got {s:?}")))
}

fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap().trim();
        if !line.is_empty() {
            let (k, v) = split_kv(line)?;
            pairs.push((k.to_string(), v.to_string()));
        }
    }
    Ok(pairs)
}

fn gen_data(a: GenDataArgs, io: &mut Io) -> Result<i32> {
    let mut scene = SceneConfig::default();
    let mut count = 220;
    let mut out_dir = None;
    let mut apply = |k: &str, v: &str, scene: &mut SceneConfig| -> Result<()> {
        match k {
            "count" => {
                count = v
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid count {v:?}")))?
            }
            "out.dir" => out_dir = Some(PathBuf::from(v)),
            _ => scene.set(k, v)?,
        }
        Ok(())
    };
    if let Some(path) = &a.config {
        for (k, v) in read_kv_file(path)? {
            apply(&k, &v, &mut scene)?;
        }
    }
    for s in &a.set {
        let (k, v) = split_kv(s)?;
        apply(k, v, &mut scene)?;
    }
    if let Some(c) = a.count {
        count = c;
    }
    if let Some(dir) = a.out {
        out_dir = Some(dir);
    }
    if let Some(s) = a.seed {
        scene.seed = s;
    }
    if let Some(h) = a.height {
        scene.height = h;
    }
    if let Some(w) = a.width {
        scene.width = w;
    }
    let out_dir = out_dir.ok_or_else(|| Error::Config("gen-data needs --out or out.dir".into()))?;
    io.json(json!({"event": "config", "command": "gen-data", "count": count, "out": out_dir, "scene": scene}))?;
    let manifest = build_dataset(&scene, count, &out_dir)?;
    io.say(format_args!("wrote {} samples to {}", manifest.samples.len(), out_dir.display()))?;
    io.json(json!({
        "event": "dataset",
        "manifest": out_dir.join(crate::data::MANIFEST_FILE),
        "train": manifest.split(Split::Train).count(),
        "test": manifest.split(Split::Test).count(),
    }))?;
    Ok(EXIT_OK)
}

fn train_cmd(a: TrainArgs, io: &mut Io) -> Result<i32> {
    let mut cfg = match &a.config {
        Some(path) => {
            let mut cfg = TrainConfig::default();
            for (k, v) in read_kv_file(path)? {
                cfg.set(&k, &v)?;
            }
            cfg
        }
        None => TrainConfig::default(),
    };
    for s in &a.set {
        let (k, v) = split_kv(s)?;
        cfg.set(k, v)?;
    }
    if let Some(m) = a.manifest {
        cfg.manifest = Some(m);
    }
    if let Some(o) = a.out {
        cfg.out_dir = o;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    cfg.validate()?;
    io.json(json!({"event": "config", "command": "train", "config": cfg}))?;
    let mut lines = Vec::new();
    let outcome = train::train(&cfg, |r| lines.push(serde_json::to_value(r).expect("record serialises")))?;
    for l in lines {
        io.json(l)?;
    }
    io.say(format_args!("checkpoint written to {}", outcome.checkpoint.display()))?;
    io.json(json!({"event": "checkpoint", "path": outcome.checkpoint, "log": outcome.log_path}))?;
    Ok(EXIT_OK)
}

fn enhance_cmd(a: EnhanceArgs, io: &mut Io) -> Result<i32> {
    let params = checkpoint::load(&a.ckpt)?;
    let x = read_ppm(&a.input)?;
    io.json(json!({"event": "config", "command": "enhance", "ckpt": a.ckpt, "in": a.input, "out": a.out, "illum": a.illum}))?;
    let (enhanced, m) = model::enhance(&params, &x)?;
    write_ppm(&a.out, &enhanced)?;
    if let Some(path) = &a.illum {
        write_pfm(path, &m.values().value().channel_mean())?;
    }
    io.json(json!({
        "event": "enhance",
        "brightness_in": crate::metrics::brightness(&x),
        "brightness_out": crate::metrics::brightness(&enhanced),
        "entropy_in": crate::metrics::discrete_entropy(&x)?,
        "entropy_out": crate::metrics::discrete_entropy(&enhanced)?,
    }))?;
    Ok(EXIT_OK)
}

fn complete_one(params: &ModelParams, rgb: &Tensor, sparse: &Tensor) -> Result<Tensor> {
    let out = model::predict(params, rgb, sparse, &model::validity_mask(sparse))?;
    Ok(out.depth.value().clone())
}

fn complete_cmd(a: CompleteArgs, io: &mut Io) -> Result<i32> {
    let params = checkpoint::load(&a.ckpt)?;
    io.json(json!({"event": "config", "command": "complete", "ckpt": a.ckpt, "rgb": a.rgb, "sparse": a.sparse,
                   "out": a.out, "manifest": a.manifest, "out_dir": a.out_dir}))?;
    match (a.rgb, a.manifest) {
        (Some(rgb), None) => {
            let (sparse, out) = (a.sparse.unwrap(), a.out.unwrap());
            let depth = complete_one(&params, &read_ppm(rgb)?, &read_pfm(sparse)?)?;
            write_pfm(&out, &depth)?;
            io.json(json!({"event": "prediction", "path": out}))?;
        }
        (None, Some(manifest)) => {
            let ds = Dataset::open(manifest)?;
            let dir = a.out_dir.unwrap();
            std::fs::create_dir_all(&dir)?;
            for e in ds.manifest.split(Split::Test) {
                let s = ds.load(e)?;
                let depth = complete_one(&params, &s.rgb, &s.sparse_depth)?;
                let path = dir.join(format!("{}.pfm", e.id));
                write_pfm(&path, &depth)?;
                io.json(json!({"event": "prediction", "id": e.id, "path": path}))?;
            }
        }
        _ => return Err(Error::Config("complete needs either --rgb/--sparse/--out or --manifest/--out-dir".into())),
    }
    Ok(EXIT_OK)
}

fn eval_cmd(a: EvalArgs, io: &mut Io) -> Result<i32> {
    let ds = Dataset::open(&a.manifest)?;
    let split = if a.split == "train" { Split::Train } else { Split::Test };
    io.json(json!({"event": "config", "command": "eval", "pred_dir": a.pred_dir, "manifest": a.manifest, "split": a.split}))?;
    let mut preds = Vec::new();
    let mut samples = Vec::new();
    for e in ds.manifest.split(split) {
        preds.push(read_pfm(a.pred_dir.join(format!("{}.pfm", e.id)))?);
        samples.push(ds.load(e)?);
    }
    if samples.is_empty() {
        return Err(Error::Data(format!("manifest has no {} samples", a.split)));
    }
    let pred = Tensor::stack(&preds).map_err(|e| Error::Data(e.to_string()))?;
    let batch = collate(&samples.iter().collect::<Vec<_>>())?;
    if pred.shape() != batch.gt.shape() {
        return Err(Error::Data(format!("predictions {} do not match ground truth {}", pred.shape(), batch.gt.shape())));
    }
    let mut report = completion_metrics(&pred, &batch.gt, &batch.gt_valid)?;
    let est = estimation_metrics(&pred, &batch.gt, &batch.gt_valid)?;
    for (k, m) in est.metrics {
        if k != "rmse" {
            report.insert(&k, m.value, &m.unit);
        }
    }
    io.say(format_args!("rmse {:.4} m over {} samples", report.get("rmse").unwrap(), samples.len()))?;
    io.json(json!({"event": "metrics", "split": a.split, "samples": samples.len(), "metrics": report}))?;
    Ok(EXIT_OK)
}

fn gradcheck_cmd(a: GradcheckArgs, io: &mut Io) -> Result<i32> {
    let params = match &a.ckpt {
        Some(p) => checkpoint::load(p)?,
        None => {
            let mut cfg = TrainConfig::default();
            cfg.set("model.widths", &a.widths)?;
            ModelParams::init(ModelConfig { ..cfg.model }, a.seed)?
        }
    };
    let scene = SceneConfig {
        height: a.size,
        width: a.size,
        seed: a.seed,
        ..SceneConfig::default()
    };
    let samples = (0..a.batch)
        .map(|i| crate::data::generate_sample(&scene, i))
        .collect::<Result<Vec<_>>>()?;
    let batch = collate(&samples.iter().collect::<Vec<_>>())?;
    io.json(json!({"event": "config", "command": "gradcheck", "seed": a.seed, "batch": a.batch, "size": a.size,
                   "h": a.h, "per_tensor": a.per_tensor, "tolerance": a.tolerance, "model": params.config}))?;
    let opts = GradcheckOptions {
        h: a.h,
        per_tensor: a.per_tensor,
        seed: a.seed,
        ..GradcheckOptions::default()
    };
    let report = train::model_gradcheck(&params, &batch, LossWeights::default(), opts)?;
    let pass = report.passes(a.tolerance);
    io.json(json!({
        "event": "gradcheck",
        "checked": report.checked,
        "skipped_kinks": report.skipped_kinks,
        "max_rel_error": report.max_rel_error,
        "mean_rel_error": report.mean_rel_error,
        "worst": report.worst(),
        "pass": pass,
    }))?;
    io.say(format_args!(
        "{} parameters checked ({} skipped at kinks), max relative error {:.3e}: {}",
        report.checked,
        report.skipped_kinks,
        report.max_rel_error,
        if pass { "pass" } else { "FAIL" }
    ))?;
    Ok(if pass { EXIT_OK } else { EXIT_CHECK })
}

/// Entry point for the binary.
pub fn main() -> ! {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let code = run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(code)
}
