//! Brightens a synthetic night image with an untrained Retinex head and one
//! whose illumination is pinned to 1, and reports entropy and brightness.
//!
//! cargo run --release --example enhance_image -- /tmp/enhance

use std::path::PathBuf;

use ldcnet::data::{generate_sample, write_pfm, write_ppm, SceneConfig};
use ldcnet::metrics::{brightness, discrete_entropy};
use ldcnet::model::{enhance, ModelConfig, ModelParams};

fn main() -> ldcnet::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "enhance-out".into()));
    std::fs::create_dir_all(&out)?;
    let sample = generate_sample(&SceneConfig::default(), 0)?;
    write_ppm(out.join("night.ppm"), &sample.rgb)?;
    write_ppm(out.join("clean.ppm"), &sample.clean_rgb)?;

    let mut params = ModelParams::init(ModelConfig::default(), 0)?;
    let (enhanced, m) = enhance(&params, &sample.rgb)?;
    write_ppm(out.join("enhanced.ppm"), &enhanced)?;
    write_pfm(out.join("illumination.pfm"), &m.values().value().channel_mean())?;

    for (name, img) in [("night", &sample.rgb), ("enhanced", &enhanced), ("clean", &sample.clean_rgb)] {
        println!("{name:>9}: brightness {:.4}  entropy {:.4} bits", brightness(img), discrete_entropy(img)?);
    }

    params.store.get_mut("enhance.output.weight")?.data_mut().fill(0.0);
    params.store.get_mut("enhance.output.bias")?.data_mut().fill(1000.0);
    let (identity, _) = enhance(&params, &sample.rgb)?;
    println!("m = 1 leaves the image unchanged: {}", identity == sample.rgb);
    println!("images written to {}", out.display());
    Ok(())
}
