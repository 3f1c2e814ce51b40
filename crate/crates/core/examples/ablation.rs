//! Trains the full model and the no-RICD / no-IAICD variants on a synthetic
//! night-time benchmark over several seeds and prints median test RMSE.
//!
//! cargo run --release --example ablation

use std::time::Instant;

use clap::Parser;
use ldcnet::data::{generate_sample, SceneConfig};
use ldcnet::model::Variant;
use ldcnet::train::{ablation, TrainConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 20)]
    test: usize,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value = "4,8,16,32,64")]
    widths: String,
    #[arg(long, default_value_t = 4)]
    hidden: usize,
    #[arg(long, default_value = "0,1,2")]
    seeds: String,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 7)]
    data_seed: u64,
}

fn main() -> ldcnet::Result<()> {
    let args = Args::parse();
    let scene = SceneConfig {
        seed: args.data_seed,
        ..SceneConfig::default()
    };
    let all: Vec<_> = (0..args.train + args.test)
        .map(|i| generate_sample(&scene, i))
        .collect::<ldcnet::Result<_>>()?;
    let (train, test) = all.split_at(args.train);
    let seeds: Vec<u64> = args.seeds.split(',').map(|s| s.parse().unwrap()).collect();

    let mut base = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        lr: args.lr,
        ..TrainConfig::default()
    };
    base.set("model.widths", &args.widths)?;
    base.set("ricd.hidden", &args.hidden.to_string())?;

    let variants = [Variant::Full, Variant::NoRicd, Variant::NoIaicd];
    let started = Instant::now();
    let rows = ablation(&base, &variants, &seeds, train, test, |variant, seed, s| {
        let rmse = s.test.as_ref().and_then(|r| r.get("rmse")).unwrap_or(f64::NAN);
        eprintln!(
            "[{:6.0}s] {variant:?} seed {seed} epoch {} loss {:.4} rmse {rmse:.4}",
            started.elapsed().as_secs_f64(),
            s.epoch,
            s.train.total
        );
    })?;
    for row in &rows {
        println!("{:?}: rmse per seed {:?}, median {:.4} m", row.variant, row.rmse, row.median);
    }
    println!(
        "full < no_ricd: {}, full < no_iaicd: {}",
        rows[0].median < rows[1].median,
        rows[0].median < rows[2].median
    );
    Ok(())
}
