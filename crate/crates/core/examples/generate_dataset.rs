//! Writes a small synthetic night-time RGB-D dataset (PPM images, PFM depth
//! maps, JSON manifest) and reads one sample back.
//!
//! cargo run --release --example generate_dataset -- /tmp/ldc-data 24

use ldcnet::data::{build_dataset, Dataset, SceneConfig, Split};

fn main() -> ldcnet::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "ldc-data".into());
    let count = args.next().map_or(24, |c| c.parse().expect("count must be an integer"));
    let scene = SceneConfig { seed: 11, ..SceneConfig::default() };
    let manifest = build_dataset(&scene, count, &dir)?;
    println!(
        "{} samples in {dir}: {} train, {} test",
        manifest.count,
        manifest.split(Split::Train).count(),
        manifest.split(Split::Test).count()
    );

    let ds = Dataset::open(&dir)?;
    let entry = &ds.manifest.samples[0];
    let s = ds.load(entry)?;
    let valid = |t: &ldcnet::Tensor| t.data().iter().filter(|&&d| d > 0.0).count();
    println!(
        "sample {}: rgb {}, {} valid gt pixels, {} sparse points, mean darkening {:.3}",
        s.id,
        s.rgb.shape(),
        valid(&s.gt_depth),
        valid(&s.sparse_depth),
        s.illumination.mean()
    );
    Ok(())
}
