//! Binary checkpoint container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! magic    4 bytes  "LDCK"
//! version  u8       1
//! count    u32      number of records
//! record × count, sorted by name:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   shape    4 × u32 (N, C, H, W)
//!   values   N·C·H·W × f64, row-major
//! ```
//!
//! Model parameters and buffers are stored under their parameter paths. The
//! model configuration is stored as records under `config.`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::diffconv::{IaicdMode, RicdConfig};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams, SCALES};
use crate::params::ParamStore;
use crate::tensor::{Shape, Tensor};

pub const MAGIC: &[u8; 4] = b"LDCK";
pub const VERSION: u8 = 1;

/// Serialises named tensors in sorted name order.
pub fn encode_records(records: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for (name, t) in records {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        for d in t.shape().to_array() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_records(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.take(1)?[0];
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("record name is not UTF-8".into()))?
            .to_string();
        let dims = [r.u32()?, r.u32()?, r.u32()?, r.u32()?].map(|d| d as usize);
        let shape = Shape::from_array(dims);
        let raw = r.take(shape.numel().checked_mul(8).ok_or_else(|| Error::Format("record too large".into()))?)?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if out.insert(name.clone(), Tensor::from_vec(shape, data)?).is_some() {
            return Err(Error::Format(format!("duplicate record {name:?}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after the last record".into()));
    }
    Ok(out)
}

fn row(values: &[f64]) -> Tensor {
    Tensor::from_vec(Shape::new(1, 1, 1, values.len()), values.to_vec()).unwrap()
}

fn flag(b: bool) -> f64 {
    f64::from(u8::from(b))
}

fn config_records(cfg: &ModelConfig) -> [(&'static str, Tensor); 4] {
    let mode = match cfg.iaicd_mode {
        IaicdMode::WindowRenormalized => 0.0,
        IaicdMode::Literal => 1.0,
    };
    [
        ("config.widths", row(&cfg.widths.map(|w| w as f64))),
        (
            "config.ricd",
            row(&[cfg.ricd.k_large, cfg.ricd.k_small, cfg.ricd.steps, cfg.ricd.hidden_channels].map(|v| v as f64)),
        ),
        (
            "config.flags",
            row(&[flag(cfg.use_ricd), flag(cfg.use_iaicd), flag(cfg.learn_aggregation), flag(cfg.halve_first_layer), mode]),
        ),
        ("config.scalars", row(&[cfg.illumination_floor, cfg.depth_scale])),
    ]
}

fn read_config(records: &mut BTreeMap<String, Tensor>) -> Result<ModelConfig> {
    let mut take = |name: &str, len: usize| -> Result<Vec<f64>> {
        let t = records
            .remove(name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))?;
        if t.numel() != len {
            return Err(Error::Format(format!("{name} has {} values, expected {len}", t.numel())));
        }
        Ok(t.into_vec())
    };
    let count = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::Format(format!("bad integer {v} in checkpoint config")))
        }
    };
    let widths = take("config.widths", SCALES)?;
    let ricd = take("config.ricd", 4)?;
    let flags = take("config.flags", 5)?;
    let scalars = take("config.scalars", 2)?;
    let mut w = [0; SCALES];
    for (dst, &v) in w.iter_mut().zip(&widths) {
        *dst = count(v)?;
    }
    let cfg = ModelConfig {
        widths: w,
        ricd: RicdConfig {
            k_large: count(ricd[0])?,
            k_small: count(ricd[1])?,
            steps: count(ricd[2])?,
            hidden_channels: count(ricd[3])?,
        },
        use_ricd: flags[0] != 0.0,
        use_iaicd: flags[1] != 0.0,
        learn_aggregation: flags[2] != 0.0,
        halve_first_layer: flags[3] != 0.0,
        iaicd_mode: if flags[4] == 0.0 { IaicdMode::WindowRenormalized } else { IaicdMode::Literal },
        illumination_floor: scalars[0],
        depth_scale: scalars[1],
    };
    cfg.validate().map_err(|e| Error::Format(format!("checkpoint config: {e}")))?;
    Ok(cfg)
}

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let mut records: BTreeMap<String, Tensor> = params.store.iter().map(|(p, t)| (p.clone(), t.clone())).collect();
    for (name, t) in config_records(&params.config) {
        records.insert(name.to_string(), t);
    }
    encode_records(&records)
}

/// Rebuilds the model; the stored tensors must match the configuration's layout exactly.
pub fn decode(bytes: &[u8]) -> Result<ModelParams> {
    let mut records = decode_records(bytes)?;
    let config = read_config(&mut records)?;
    let mut store = ParamStore::default();
    for spec in config.param_specs() {
        let t = records
            .remove(&spec.path)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks parameter {:?}", spec.path)))?;
        if t.shape() != spec.shape {
            return Err(Error::Format(format!("{} has shape {}, expected {}", spec.path, t.shape(), spec.shape)));
        }
        store.insert(&spec.path, t, spec.trainable())?;
    }
    if let Some(extra) = records.keys().next() {
        return Err(Error::Format(format!("unexpected record {extra:?}")));
    }
    Ok(ModelParams { config, store })
}

pub fn save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<ModelParams> {
    decode(&std::fs::read(path)?)
}
