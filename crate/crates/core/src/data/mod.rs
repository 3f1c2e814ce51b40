//! Synthetic night-time RGB-D scenes, scanline-biased depth sparsification,
//! and the on-disk dataset layout (PPM colour, PFM depth, JSON manifest).

pub mod io;

use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub use io::{decode_pfm, decode_ppm, encode_pfm, encode_ppm, read_pfm, read_ppm, write_pfm, write_ppm};

const SCENE_STREAM: u64 = 0;
const NIGHT_STREAM: u64 = 1;
const VALIDITY_STREAM: u64 = 2;
const SPARSIFY_STREAM: u64 = 3;
const NOISE_STREAM: u64 = 4;

/// Fraction of the horizon row from the top of the frame.
const HORIZON: f64 = 0.35;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    pub depth_min: f64,
    pub depth_max: f64,
    pub primitives: usize,
    /// Fraction of pixels that carry ground-truth depth.
    pub gt_valid_fraction: f64,
    /// Fraction of ground-truth pixels kept in the sparse input.
    pub sparse_density: f64,
    pub lights: usize,
    pub ambient: f64,
    /// Steepness of the lit/dark transition at each light's edge.
    pub terminator_sharpness: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            depth_min: 2.0,
            depth_max: 40.0,
            primitives: 6,
            gt_valid_fraction: 0.8,
            sparse_density: 0.05,
            lights: 3,
            ambient: 0.12,
            terminator_sharpness: 8.0,
            noise_std: 0.01,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.height < 32 || self.width < 32 || self.height % 16 != 0 || self.width % 16 != 0 {
            return bad("scene extents must be multiples of 16 and at least 32");
        }
        if !(self.depth_min > 0.0 && self.depth_min < self.depth_max && self.depth_max.is_finite()) {
            return bad("depth range must satisfy 0 < depth_min < depth_max");
        }
        if !(self.gt_valid_fraction > 0.0 && self.gt_valid_fraction <= 1.0) {
            return bad("gt_valid_fraction must lie in (0, 1]");
        }
        if !(self.sparse_density > 0.0 && self.sparse_density <= 1.0) {
            return bad("sparse_density must lie in (0, 1]");
        }
        if !(self.ambient > 0.0 && self.ambient <= 1.0) {
            return bad("ambient must lie in (0, 1]");
        }
        if !(self.terminator_sharpness > 0.0) || !(self.noise_std >= 0.0) {
            return bad("terminator_sharpness must be positive and noise_std non-negative");
        }
        Ok(())
    }

    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        match key {
            "height" => self.height = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "depth_min" => self.depth_min = parse(key, value)?,
            "depth_max" => self.depth_max = parse(key, value)?,
            "primitives" => self.primitives = parse(key, value)?,
            "gt_valid_fraction" => self.gt_valid_fraction = parse(key, value)?,
            "sparse_density" => self.sparse_density = parse(key, value)?,
            "lights" => self.lights = parse(key, value)?,
            "ambient" => self.ambient = parse(key, value)?,
            "terminator_sharpness" => self.terminator_sharpness = parse(key, value)?,
            "noise_std" => self.noise_std = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown scene key {other:?}"))),
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    fn horizon_row(&self) -> f64 {
        HORIZON * self.height as f64
    }
}

/// Depth of the ground plane: `depth_min` at the bottom row, growing as the
/// inverse distance below the horizon and capped at `depth_max`.
pub fn ground_plane_depth(cfg: &SceneConfig) -> Tensor {
    let h0 = cfg.horizon_row();
    let span = cfg.height as f64 - h0;
    Tensor::from_fn(Shape::new(1, 1, cfg.height, cfg.width), |_, _, y, _| {
        let t = (y as f64 + 1.0 - h0) / span;
        if t <= 0.0 {
            cfg.depth_max
        } else {
            (cfg.depth_min / t).min(cfg.depth_max)
        }
    })
}

#[derive(Clone, Copy, Debug)]
enum Primitive {
    Rect,
    Ellipse,
}

/// Clean colour image and ground-truth depth (zero where invalid) of one scene.
pub fn generate_scene(cfg: &SceneConfig) -> Result<(Tensor, Tensor)> {
    cfg.validate()?;
    let mut rng = cfg.rng(SCENE_STREAM);
    let (hh, ww) = (cfg.height, cfg.width);
    let mut depth = ground_plane_depth(cfg);
    let h0 = cfg.horizon_row();

    let ground: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.25..0.6));
    let sky: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.05..0.3));
    let mut rgb = Tensor::from_fn(Shape::new(1, 3, hh, ww), |_, c, y, x| {
        if (y as f64) < h0 {
            sky[c]
        } else {
            // Lane-like stripes give the ground texture that scales with depth.
            let d = depth.get(0, 0, y, x);
            let stripe = if ((d * 0.8) as i64) % 2 == 0 { 1.0 } else { 0.75 };
            ground[c] * stripe
        }
    });

    let mut objects: Vec<_> = (0..cfg.primitives)
        .map(|_| {
            let base = rng.random_range(h0 + 2.0..hh as f64);
            let t = (base + 1.0 - h0) / (hh as f64 - h0);
            let d = (cfg.depth_min / t).clamp(cfg.depth_min, cfg.depth_max);
            let size = rng.random_range(0.6..1.6) * cfg.depth_min / d * hh as f64 * 0.45;
            let aspect = rng.random_range(0.5..1.5);
            let cx = rng.random_range(0.0..ww as f64);
            let kind = if rng.random_bool(0.5) { Primitive::Rect } else { Primitive::Ellipse };
            let colour: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.2..1.0));
            (d, base, size, size * aspect, cx, kind, colour)
        })
        .collect();
    // Painter's order: far to near.
    objects.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (d, base, height, width, cx, kind, colour) in objects {
        let top = base - height;
        let cy = base - height / 2.0;
        for y in 0..hh {
            let py = y as f64 + 0.5;
            if py < top || py > base {
                continue;
            }
            for x in 0..ww {
                let px = x as f64 + 0.5;
                let (u, v) = ((px - cx) / (width / 2.0), (py - cy) / (height / 2.0));
                let inside = match kind {
                    Primitive::Rect => u.abs() <= 1.0,
                    Primitive::Ellipse => u * u + v * v <= 1.0,
                };
                if inside {
                    depth.set(0, 0, y, x, d);
                    let shade = 0.8 + 0.2 * (1.0 - v) / 2.0;
                    for (c, &col) in colour.iter().enumerate() {
                        rgb.set(0, c, y, x, col * shade);
                    }
                }
            }
        }
    }

    let total = hh * ww;
    let invalid = total - (cfg.gt_valid_fraction * total as f64).round() as usize;
    let mut vrng = cfg.rng(VALIDITY_STREAM);
    for i in index::sample(&mut vrng, total, invalid).into_iter() {
        depth.data_mut()[i] = 0.0;
    }
    Ok((rgb, depth))
}

/// Multiplicative darkening field in `(0, 1]`: ambient plus Gaussian light
/// blobs, each cut off by a sigmoid terminator at about 1.5 blob radii.
pub fn illumination_field(cfg: &SceneConfig) -> Tensor {
    let mut rng = cfg.rng(NIGHT_STREAM);
    let (hh, ww) = (cfg.height as f64, cfg.width as f64);
    let blobs: Vec<_> = (0..cfg.lights)
        .map(|_| {
            let cy = rng.random_range(0.0..hh);
            let cx = rng.random_range(0.0..ww);
            let sigma = rng.random_range(0.08..0.22) * ww;
            let amp = rng.random_range(0.5..1.0);
            (cy, cx, sigma, amp)
        })
        .collect();
    Tensor::from_fn(Shape::new(1, 1, cfg.height, cfg.width), |_, _, y, x| {
        let mut v = cfg.ambient;
        for &(cy, cx, sigma, amp) in &blobs {
            let r = ((y as f64 + 0.5 - cy).powi(2) + (x as f64 + 0.5 - cx).powi(2)).sqrt();
            let gauss = (-(r * r) / (2.0 * sigma * sigma)).exp();
            let edge = 1.0 / (1.0 + (-cfg.terminator_sharpness * (1.5 - r / sigma)).exp());
            v += amp * gauss * edge;
        }
        v.min(1.0)
    })
}

/// Low-light rendering `clamp(field ⊙ rgb + noise, 0, 1)` and the field used.
pub fn apply_night(rgb: &Tensor, cfg: &SceneConfig) -> Result<(Tensor, Tensor)> {
    let s = rgb.shape();
    if s.n != 1 || s.c != 3 || s.h != cfg.height || s.w != cfg.width {
        return Err(Error::Shape(format!("night rendering expects 1x3x{}x{}, got {s}", cfg.height, cfg.width)));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("colour value {v} outside [0, 1]")));
    }
    let field = illumination_field(cfg);
    let mut out = Tensor::from_fn(s, |_, c, y, x| rgb.get(0, c, y, x) * field.get(0, 0, y, x));
    if cfg.noise_std > 0.0 {
        let mut rng = cfg.rng(NOISE_STREAM);
        let normal = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string()))?;
        for v in out.data_mut() {
            *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok((out, field))
}

/// Relative sampling weight of row `y`: every fourth row is a scanline.
fn row_weight(y: usize) -> f64 {
    if y % 4 == 0 {
        1.0
    } else {
        0.15
    }
}

/// Keeps `round(density · valid)` ground-truth pixels, drawn without
/// replacement with scanline rows favoured; all others are zero.
pub fn sparsify(gt: &Tensor, density: f64, seed: u64) -> Result<Tensor> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Config(format!("sparse density {density} outside (0, 1]")));
    }
    let s = gt.shape();
    let valid: Vec<usize> = (0..gt.numel()).filter(|&i| gt.data()[i] > 0.0).collect();
    let keep = (density * valid.len() as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SPARSIFY_STREAM);
    // Weighted sampling without replacement: the `keep` largest u^(1/w) keys.
    let mut keyed: Vec<(f64, usize)> = valid
        .iter()
        .map(|&i| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            let (_, _, y, _) = s.coords(i);
            (u.ln() / row_weight(y), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut out = Tensor::zeros(s);
    for &(_, i) in &keyed[..keep] {
        out.data_mut()[i] = gt.data()[i];
    }
    Ok(out)
}

/// One sample as stored on disk: values quantised to 8-bit colour and 32-bit depth.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbdSample {
    pub id: String,
    /// `1×3×H×W` low-light image.
    pub rgb: Tensor,
    pub sparse_depth: Tensor,
    pub gt_depth: Tensor,
    /// Darkening field used to render `rgb`; diagnostic only.
    pub illumination: Tensor,
    pub clean_rgb: Tensor,
}

fn round_f32(t: &Tensor) -> Tensor {
    t.map(|v| v as f32 as f64)
}

fn round_u8(t: &Tensor) -> Tensor {
    t.map(|v| io::quantize_u8(v) as f64 / 255.0)
}

/// Seed of sample `index` in a dataset seeded with `seed`.
pub fn sample_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Generates sample `index` exactly as [`build_dataset`] would write it.
pub fn generate_sample(cfg: &SceneConfig, index: usize) -> Result<RgbdSample> {
    let cfg = SceneConfig {
        seed: sample_seed(cfg.seed, index),
        ..cfg.clone()
    };
    let (clean, gt) = generate_scene(&cfg)?;
    let (night, field) = apply_night(&clean, &cfg)?;
    let gt = round_f32(&gt);
    let sparse = sparsify(&gt, cfg.sparse_density, cfg.seed)?;
    Ok(RgbdSample {
        id: format!("{index:06}"),
        rgb: round_u8(&night),
        sparse_depth: sparse,
        gt_depth: gt,
        illumination: round_f32(&field),
        clean_rgb: round_u8(&clean),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub seed: u64,
    pub rgb: String,
    pub clean_rgb: String,
    pub sparse_depth: String,
    pub gt_depth: String,
    pub illumination: String,
}

/// Dataset index. File paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub count: usize,
    pub config: SceneConfig,
    pub samples: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// Number of held-out samples for a dataset of `count`: a tenth, at least one.
pub fn test_count(count: usize) -> usize {
    (count / 10).max(1)
}

impl Manifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises") + "\n"
    }
}

/// Writes `count` samples and `manifest.json` into `out_dir`; the last tenth
/// (at least one) is the test split.
pub fn build_dataset(cfg: &SceneConfig, count: usize, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    if count < 2 {
        return Err(Error::Config("a dataset needs at least 2 samples".into()));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir)?;
    let first_test = count - test_count(count);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let s = generate_sample(cfg, i)?;
        let name = |kind: &str, ext: &str| format!("{}_{kind}.{ext}", s.id);
        let entry = ManifestEntry {
            id: s.id.clone(),
            split: if i < first_test { Split::Train } else { Split::Test },
            seed: sample_seed(cfg.seed, i),
            rgb: name("rgb", "ppm"),
            clean_rgb: name("clean", "ppm"),
            sparse_depth: name("sparse", "pfm"),
            gt_depth: name("gt", "pfm"),
            illumination: name("illum", "pfm"),
        };
        write_ppm(out_dir.join(&entry.rgb), &s.rgb)?;
        write_ppm(out_dir.join(&entry.clean_rgb), &s.clean_rgb)?;
        write_pfm(out_dir.join(&entry.sparse_depth), &s.sparse_depth)?;
        write_pfm(out_dir.join(&entry.gt_depth), &s.gt_depth)?;
        write_pfm(out_dir.join(&entry.illumination), &s.illumination)?;
        samples.push(entry);
    }
    let manifest = Manifest {
        version: 1,
        seed: cfg.seed,
        count,
        config: cfg.clone(),
        samples,
    };
    std::fs::write(out_dir.join(MANIFEST_FILE), manifest.to_json())?;
    Ok(manifest)
}

/// A manifest together with the directory its paths are relative to.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: Manifest,
    pub root: PathBuf,
}

impl Dataset {
    /// Opens a manifest file, or `manifest.json` inside a directory.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
        let manifest = Manifest::read(&file)?;
        if manifest.samples.is_empty() {
            return Err(Error::Data(format!("manifest {} lists no samples", file.display())));
        }
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { manifest, root })
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<RgbdSample> {
        let p = |rel: &str| self.root.join(rel);
        let sample = RgbdSample {
            id: entry.id.clone(),
            rgb: read_ppm(p(&entry.rgb))?,
            sparse_depth: read_pfm(p(&entry.sparse_depth))?,
            gt_depth: read_pfm(p(&entry.gt_depth))?,
            illumination: read_pfm(p(&entry.illumination))?,
            clean_rgb: read_ppm(p(&entry.clean_rgb))?,
        };
        let s = sample.rgb.shape();
        let d = Shape::new(1, 1, s.h, s.w);
        if sample.sparse_depth.shape() != d || sample.gt_depth.shape() != d {
            return Err(Error::Data(format!("sample {} has mismatched image and depth extents", entry.id)));
        }
        Ok(sample)
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<RgbdSample>> {
        self.manifest.split(split).map(|e| self.load(e)).collect()
    }
}

/// Stacks samples into `(rgb, sparse, sparse mask, gt, gt mask)` batch tensors.
pub fn collate(samples: &[&RgbdSample]) -> Result<Batch> {
    let stack = |f: fn(&RgbdSample) -> &Tensor| Tensor::stack(&samples.iter().map(|s| f(s).clone()).collect::<Vec<_>>());
    let sparse = stack(|s| &s.sparse_depth)?;
    let gt = stack(|s| &s.gt_depth)?;
    Ok(Batch {
        rgb: stack(|s| &s.rgb)?,
        sparse_valid: crate::model::validity_mask(&sparse),
        gt_valid: crate::model::validity_mask(&gt),
        sparse,
        gt,
    })
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub rgb: Tensor,
    pub sparse: Tensor,
    pub sparse_valid: Tensor,
    pub gt: Tensor,
    pub gt_valid: Tensor,
}
