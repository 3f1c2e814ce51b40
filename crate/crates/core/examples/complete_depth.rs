//! Predicts dense depth from a night image and sparse depth, before and after
//! a short fit on a handful of scenes, and scores both predictions.
//!
//! cargo run --release --example complete_depth

use ldcnet::data::{generate_sample, SceneConfig};
use ldcnet::metrics::completion_metrics;
use ldcnet::model::{predict, validity_mask, ModelConfig, ModelParams};
use ldcnet::train::{fit, TrainConfig};

fn main() -> ldcnet::Result<()> {
    let scene = SceneConfig { height: 32, width: 32, ..SceneConfig::default() };
    let samples: Vec<_> = (0..17).map(|i| generate_sample(&scene, i)).collect::<ldcnet::Result<_>>()?;
    let (train, test) = samples.split_at(16);
    let target = &test[0];

    let model = ModelConfig { widths: [4, 8, 8, 16, 16], ..ModelConfig::default() };
    let score = |p: &ModelParams| -> ldcnet::Result<f64> {
        let valid = validity_mask(&target.sparse_depth);
        let depth = predict(p, &target.rgb, &target.sparse_depth, &valid)?.depth.value().clone();
        let report = completion_metrics(&depth, &target.gt_depth, &validity_mask(&target.gt_depth))?;
        Ok(report.get("rmse").unwrap())
    };
    println!("untrained RMSE {:.3} m", score(&ModelParams::init(model.clone(), 0)?)?);

    let cfg = TrainConfig { epochs: 8, batch_size: 4, lr: 3e-3, model, ..TrainConfig::default() };
    let trained = fit(&cfg, train, &[], |s, _| {
        println!("epoch {} train loss {:.3}", s.epoch, s.train.total);
        Ok(())
    })?;
    println!("trained   RMSE {:.3} m", score(&trained)?);
    Ok(())
}
