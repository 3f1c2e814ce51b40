//! PFM (depth) and binary PPM (colour) readers and writers.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

/// Splits `count` whitespace-separated header tokens off `bytes`, skipping
/// `#` comments, and returns them with the offset just past the single
/// whitespace byte that ends the last token.
fn header_tokens(bytes: &[u8], count: usize, comments: bool) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || (comments && bytes[i] == b'#')) {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(format_err("truncated header"));
        }
        let tok = std::str::from_utf8(&bytes[start..i]).map_err(|_| format_err("non-ASCII header"))?;
        tokens.push(tok.to_string());
    }
    if i >= bytes.len() {
        return Err(format_err("header is not followed by a raster"));
    }
    Ok((tokens, i + 1))
}

fn parse_dim(tok: &str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format_err(format!("bad image dimension {tok:?}"))),
    }
}

/// Bytes of a little-endian PFM: `"Pf\nW H\n-1.0\n"` then rows bottom-up.
pub fn encode_pfm(depth: &Tensor) -> Result<Vec<u8>> {
    let s = depth.shape();
    if s.n != 1 || s.c != 1 {
        return Err(Error::Shape(format!("PFM holds one single-channel map, got {s}")));
    }
    let mut out = format!("Pf\n{} {}\n-1.0\n", s.w, s.h).into_bytes();
    out.reserve(s.plane() * 4);
    for h in (0..s.h).rev() {
        for w in 0..s.w {
            out.extend_from_slice(&(depth.get(0, 0, h, w) as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses a single-channel PFM of either byte order into a `1×1×H×W` tensor.
pub fn decode_pfm(bytes: &[u8]) -> Result<Tensor> {
    let (tok, offset) = header_tokens(bytes, 4, false)?;
    if tok[0] != "Pf" {
        return Err(format_err(format!("expected single-channel PFM magic \"Pf\", got {:?}", tok[0])));
    }
    let (w, h) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
    let scale: f64 = tok[3].parse().map_err(|_| format_err(format!("bad PFM scale {:?}", tok[3])))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(format_err("PFM scale must be a non-zero number"));
    }
    let little = scale < 0.0;
    let raster = &bytes[offset..];
    if raster.len() != w * h * 4 {
        return Err(format_err(format!("PFM raster has {} bytes, expected {}", raster.len(), w * h * 4)));
    }
    let mut t = Tensor::zeros(Shape::new(1, 1, h, w));
    for (i, chunk) in raster.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (h - 1 - i / w, i % w);
        t.set(0, 0, row, col, v as f64);
    }
    Ok(t)
}

pub fn write_pfm(path: impl AsRef<Path>, depth: &Tensor) -> Result<()> {
    std::fs::write(path, encode_pfm(depth)?)?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_pfm(&std::fs::read(path)?)
}

/// `[0, 1] → {0, …, 255}` rounding half up.
pub fn quantize_u8(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Binary P6 with maxval 255.
pub fn encode_ppm(rgb: &Tensor) -> Result<Vec<u8>> {
    let s = rgb.shape();
    if s.n != 1 || s.c != 3 {
        return Err(Error::Shape(format!("PPM holds one RGB image, got {s}")));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Domain(format!("PPM value {v} outside [0, 1]")));
    }
    let mut out = format!("P6\n{} {}\n255\n", s.w, s.h).into_bytes();
    out.reserve(s.numel());
    for h in 0..s.h {
        for w in 0..s.w {
            for c in 0..3 {
                out.push(quantize_u8(rgb.get(0, c, h, w)));
            }
        }
    }
    Ok(out)
}

/// Parses a P6 image with maxval 255 into `1×3×H×W` values `byte / 255`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let (tok, offset) = header_tokens(bytes, 4, true)?;
    if tok[0] != "P6" {
        return Err(format_err(format!("expected PPM magic \"P6\", got {:?}", tok[0])));
    }
    let (w, h) = (parse_dim(&tok[1])?, parse_dim(&tok[2])?);
    if tok[3] != "255" {
        return Err(format_err(format!("unsupported PPM maxval {:?}", tok[3])));
    }
    let raster = &bytes[offset..];
    if raster.len() != w * h * 3 {
        return Err(format_err(format!("PPM raster has {} bytes, expected {}", raster.len(), w * h * 3)));
    }
    Ok(Tensor::from_fn(Shape::new(1, 3, h, w), |_, c, y, x| {
        raster[(y * w + x) * 3 + c] as f64 / 255.0
    }))
}

pub fn write_ppm(path: impl AsRef<Path>, rgb: &Tensor) -> Result<()> {
    std::fs::write(path, encode_ppm(rgb)?)?;
    Ok(())
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    decode_ppm(&std::fs::read(path)?)
}
