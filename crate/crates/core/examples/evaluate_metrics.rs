//! Completion and estimation metrics on a hand-made prediction, plus the
//! image statistics used to judge enhancement.
//!
//! cargo run --release --example evaluate_metrics

use ldcnet::metrics::{brightness, completion_metrics, discrete_entropy, estimation_metrics};
use ldcnet::{Shape, Tensor};

fn main() -> ldcnet::Result<()> {
    let s = Shape::new(1, 1, 2, 3);
    let gt = Tensor::from_vec(s, vec![2.0, 4.0, 8.0, 10.0, 0.0, 20.0])?;
    let pred = Tensor::from_vec(s, vec![4.0, 4.0, 7.0, 11.0, 3.0, 18.0])?;
    let valid = gt.map(|d| f64::from(d > 0.0));

    let mut report = completion_metrics(&pred, &gt, &valid)?;
    report.merge(estimation_metrics(&pred, &gt, &valid)?);
    println!("{}", report.to_json());

    let ramp = Tensor::from_fn(Shape::new(1, 3, 16, 16), |_, _, h, w| (h * 16 + w) as f64 / 255.0);
    println!("ramp image: entropy {:.3} bits, brightness {:.3}", discrete_entropy(&ramp)?, brightness(&ramp));
    Ok(())
}
