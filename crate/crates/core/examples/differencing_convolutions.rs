//! Central, recurrent inter- and illumination-affinitive intra-convolution
//! differencing on a small random feature map, checked against a literal
//! per-pixel evaluation.
//!
//! cargo run --release --example differencing_convolutions

use ldcnet::diffconv::{cdc_forward, iaicd_forward, ricd_step, CdcConfig, Conv, IaicdMode};
use ldcnet::{ConvKernel, Shape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::from_vec(shape, (0..shape.numel()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `θ·Σω(x[p₀+pₙ] − x[p₀]) + (1−θ)·Σω x[p₀+pₙ]`, zero outside the image.
fn cdc_by_hand(x: &Tensor, w: &Tensor, theta: f64) -> Tensor {
    let (xs, k) = (x.shape(), w.shape().h as isize);
    Tensor::from_fn(Shape::new(xs.n, w.shape().n, xs.h, xs.w), |n, o, py, px| {
        let mut acc = 0.0;
        for c in 0..xs.c {
            let centre = x.get(n, c, py, px);
            for dy in 0..k {
                for dx in 0..k {
                    let (y, xx) = (py as isize + dy - k / 2, px as isize + dx - k / 2);
                    let inside = y >= 0 && xx >= 0 && (y as usize) < xs.h && (xx as usize) < xs.w;
                    let v = if inside { x.get(n, c, y as usize, xx as usize) } else { 0.0 };
                    acc += w.get(o, c, dy as usize, dx as usize) * (v - theta * centre);
                }
            }
        }
        acc
    })
}

fn main() -> ldcnet::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, Shape::new(1, 3, 8, 8));
    let w = random(&mut rng, Shape::new(4, 3, 3, 3));
    let conv = Conv::constant(&ConvKernel::from_weights(w.clone())?);
    let xv = Var::constant(x.clone());

    for theta in [0.0, 0.5, 1.0] {
        let fast = cdc_forward(&xv, &conv, CdcConfig::new(theta)?)?;
        let err = fast.value().max_abs_diff(&cdc_by_hand(&x, &w, theta));
        println!("CDC theta={theta}: decomposed vs literal max |diff| = {err:.2e}");
    }

    // Matched kernels: a 5×5 kernel that is a zero-padded copy of a 3×3 one.
    let small = ConvKernel::from_weights(w.clone())?;
    let large = ConvKernel::from_weights(Tensor::from_fn(Shape::new(4, 3, 5, 5), |o, c, y, xx| {
        if (1..4).contains(&y) && (1..4).contains(&xx) { w.get(o, c, y - 1, xx - 1) } else { 0.0 }
    }))?;
    let d = ricd_step(&xv, &Conv::constant(&large), &Conv::constant(&small))?;
    println!("RICD with matched kernels: max |output| = {:.2e}", d.value().max_abs_diff(&Tensor::zeros(d.shape())));

    // Uniform illumination turns IAICD's centre into the window mean.
    let m = Var::constant(Tensor::full(Shape::new(1, 3, 8, 8), 0.4));
    let y = iaicd_forward(&xv, &conv, &m, IaicdMode::WindowRenormalized)?;
    println!("IAICD under uniform light: output {} mean {:+.4}", y.shape(), y.value().mean());
    Ok(())
}
