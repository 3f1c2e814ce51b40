//! PFM and PPM round trips, including a big-endian PFM written byte by byte.
//!
//! cargo run --release --example file_formats

use ldcnet::data::{decode_pfm, decode_ppm, encode_pfm, encode_ppm};
use ldcnet::{Shape, Tensor};

fn main() -> ldcnet::Result<()> {
    let depth = Tensor::from_fn(Shape::new(1, 1, 3, 4), |_, _, h, w| 1.0 + 0.1 * (h * 4 + w) as f64);
    let back = decode_pfm(&encode_pfm(&depth)?)?;
    println!("PFM round trip max |diff| {:.2e} (32-bit storage)", back.max_abs_diff(&depth));

    let rgb = Tensor::from_fn(Shape::new(1, 3, 2, 2), |_, c, h, w| (c + h + w) as f64 / 5.0);
    let back = decode_ppm(&encode_ppm(&rgb)?)?;
    println!("PPM round trip max |diff| {:.2e} (bound 1/510)", back.max_abs_diff(&rgb));

    // Negative scale marks little-endian; positive means big-endian. Rows run bottom to top.
    let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
    for v in [1.5f32, -2.25] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    println!("big-endian fixture decodes to {:?}", decode_pfm(&bytes)?.data());
    Ok(())
}
