//! Finite-difference check of every trainable tensor of a small model against
//! reverse-mode gradients of the full training loss.
//!
//! cargo run --release --example gradient_check

use ldcnet::data::{collate, generate_sample, SceneConfig};
use ldcnet::model::{ModelConfig, ModelParams};
use ldcnet::train::{model_gradcheck, GradcheckOptions, LossWeights};

fn main() -> ldcnet::Result<()> {
    let scene = SceneConfig { height: 32, width: 32, ..SceneConfig::default() };
    let samples: Vec<_> = (0..2).map(|i| generate_sample(&scene, i)).collect::<ldcnet::Result<_>>()?;
    let batch = collate(&samples.iter().collect::<Vec<_>>())?;
    let params = ModelParams::init(ModelConfig { widths: [4, 4, 8, 8, 8], ..ModelConfig::default() }, 1)?;

    let opts = GradcheckOptions { per_tensor: 4, ..GradcheckOptions::default() };
    let report = model_gradcheck(&params, &batch, LossWeights::default(), opts)?;
    println!(
        "{} entries compared, {} skipped because a kink lay within ±h",
        report.checked, report.skipped_kinks
    );
    let max_abs = report.entries.iter().filter(|e| e.smooth).map(|e| (e.analytic - e.numeric).abs()).fold(0.0, f64::max);
    // Differences under 1e-8 count as exact, so the relative error can be 0.
    println!(
        "max relative error {:.2e}, mean {:.2e}, max |analytic - numeric| {max_abs:.2e}",
        report.max_rel_error, report.mean_rel_error
    );
    if let Some(w) = report.worst() {
        println!("worst: {}[{}] analytic {:.6e} numeric {:.6e}", w.path, w.index, w.analytic, w.numeric);
    }
    Ok(())
}
