//! Trains a narrow model for a few epochs on a freshly generated dataset,
//! writing checkpoints and a JSON-lines metric log.
//!
//! cargo run --release --example train_model -- /tmp/ldc-run

use std::path::PathBuf;

use ldcnet::data::{build_dataset, SceneConfig};
use ldcnet::train::{train, TrainConfig};

fn main() -> ldcnet::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "ldc-run".into()));
    let data = root.join("data");
    build_dataset(&SceneConfig { height: 32, width: 32, seed: 3, ..SceneConfig::default() }, 40, &data)?;

    let mut cfg = TrainConfig::parse(
        "epochs = 4\n\
         batch_size = 4\n\
         lr = 0.002\n\
         model.widths = 4,8,8,16,16\n\
         ricd.hidden = 4\n",
    )?;
    cfg.manifest = Some(data);
    cfg.out_dir = root.join("out");

    let outcome = train(&cfg, |r| {
        if r.metric == "loss_total" || r.metric == "rmse" {
            println!("epoch {} {:>5} {:<10} {:.4}", r.epoch, r.split, r.metric, r.value);
        }
    })?;
    println!("checkpoint {}", outcome.checkpoint.display());
    println!("log        {}", outcome.log_path.display());
    Ok(())
}
