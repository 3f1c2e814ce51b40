mod common;

use common::{cdc_literal, conv_direct, iaicd_direct, normalize_direct, random_tensor, rng};
use ldcnet::diffconv::{
    cdc_forward, iaicd_aggregated, iaicd_forward, normalize_illumination, ricd_step, CdcConfig, Conv, IaicdMode,
};
use ldcnet::{ConvKernel, Shape, Tensor, Var};
use proptest::prelude::*;

fn conv(w: Tensor, b: Option<Tensor>) -> Conv {
    Conv::constant(&ConvKernel::new(w, b).unwrap())
}

fn cst(t: &Tensor) -> Var {
    Var::constant(t.clone())
}

fn delta(k: usize) -> Tensor {
    let mut t = Tensor::zeros(Shape::new(1, 1, k, k));
    t.set(0, 0, k / 2, k / 2, 1.0);
    t
}

#[test]
fn cdc_of_constant_input_is_zero() {
    let mut r = rng(10);
    let x = Tensor::full(Shape::new(1, 2, 6, 6), 0.8);
    let kern = conv(random_tensor(&mut r, Shape::new(3, 2, 3, 3), -1.0, 1.0), None);
    let y = cdc_forward(&cst(&x), &kern, CdcConfig::new(1.0).unwrap()).unwrap();
    // interior only: zero padding makes border neighbours differ from the centre
    for o in 0..3 {
        for h in 1..5 {
            for w in 1..5 {
                assert!(y.value().get(0, o, h, w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cdc_theta_zero_is_vanilla() {
    let mut r = rng(11);
    let x = random_tensor(&mut r, Shape::new(1, 2, 6, 6), -1.0, 1.0);
    let w = random_tensor(&mut r, Shape::new(3, 2, 3, 3), -1.0, 1.0);
    let b = random_tensor(&mut r, Shape::new(1, 3, 1, 1), -1.0, 1.0);
    let kern = conv(w.clone(), Some(b.clone()));
    let y = cdc_forward(&cst(&x), &kern, CdcConfig::new(0.0).unwrap()).unwrap();
    assert_eq!(y.value(), &x.conv2d(&ConvKernel::new(w, Some(b)).unwrap(), 1, 1).unwrap());
}

#[test]
fn cdc_matches_literal_mixture() {
    let mut r = rng(12);
    let x = random_tensor(&mut r, Shape::new(1, 2, 5, 5), -1.0, 1.0);
    let w = random_tensor(&mut r, Shape::new(2, 2, 3, 3), -1.0, 1.0);
    let y = cdc_forward(&cst(&x), &conv(w.clone(), None), CdcConfig::new(0.7).unwrap()).unwrap();
    assert!(y.value().max_abs_diff(&cdc_literal(&x, &w, None, 0.7)) < 1e-9);
}

#[test]
fn ricd_of_matched_deltas_is_zero() {
    let mut r = rng(13);
    let x = random_tensor(&mut r, Shape::new(1, 1, 7, 7), -1.0, 1.0);
    let y = ricd_step(&cst(&x), &conv(delta(3), None), &conv(delta(1), None)).unwrap();
    assert!(y.value().data().iter().all(|&v| v == 0.0));
}

#[test]
fn ricd_with_zero_small_kernel_is_large_conv() {
    let mut r = rng(14);
    let x = random_tensor(&mut r, Shape::new(1, 2, 6, 6), -1.0, 1.0);
    let w = random_tensor(&mut r, Shape::new(2, 2, 5, 5), -1.0, 1.0);
    let y = ricd_step(&cst(&x), &conv(w.clone(), None), &conv(Tensor::zeros(Shape::new(2, 2, 3, 3)), None)).unwrap();
    assert_eq!(y.value(), &x.conv2d(&ConvKernel::from_weights(w).unwrap(), 1, 2).unwrap());
}

#[test]
fn ricd_matches_two_direct_convolutions() {
    let mut r = rng(15);
    let x = random_tensor(&mut r, Shape::new(1, 4, 8, 8), -1.0, 1.0);
    let wl = random_tensor(&mut r, Shape::new(4, 4, 5, 5), -1.0, 1.0);
    let bl = random_tensor(&mut r, Shape::new(1, 4, 1, 1), -1.0, 1.0);
    let ws = random_tensor(&mut r, Shape::new(4, 4, 3, 3), -1.0, 1.0);
    let bs = random_tensor(&mut r, Shape::new(1, 4, 1, 1), -1.0, 1.0);
    let y = ricd_step(&cst(&x), &conv(wl.clone(), Some(bl.clone())), &conv(ws.clone(), Some(bs.clone()))).unwrap();
    let oracle = conv_direct(&x, &wl, Some(&bl), 1, 2)
        .zip_map(&conv_direct(&x, &ws, Some(&bs), 1, 1), |a, b| a - b)
        .unwrap();
    assert!(y.value().max_abs_diff(&oracle) < 1e-9);
}

#[test]
fn normalisation_examples() {
    let mut r = rng(16);
    let single = random_tensor(&mut r, Shape::new(1, 1, 4, 4), 0.01, 1.0);
    let n = normalize_illumination(&cst(&single), IaicdMode::default()).unwrap();
    assert!(n.values.value().data().iter().all(|&v| (v - 1.0).abs() < 1e-15));

    let equal = Tensor::full(Shape::new(1, 3, 4, 4), 0.4);
    let n = normalize_illumination(&cst(&equal), IaicdMode::default()).unwrap();
    assert!(n.values.value().data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));

    let m = random_tensor(&mut r, Shape::new(1, 3, 4, 4), 0.01, 1.0);
    let n = normalize_illumination(&cst(&m), IaicdMode::default()).unwrap();
    assert!(n.values.value().max_abs_diff(&normalize_direct(&m)) < 1e-15);
    for h in 0..4 {
        for w in 0..4 {
            let total: f64 = (0..3).map(|c| n.values.value().get(0, c, h, w)).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn iaicd_with_centre_only_aggregation_is_cdc() {
    let mut r = rng(17);
    let x = random_tensor(&mut r, Shape::new(1, 3, 6, 6), -1.0, 1.0);
    let m = random_tensor(&mut r, Shape::new(1, 3, 6, 6), 0.01, 1.0);
    let w = random_tensor(&mut r, Shape::new(2, 3, 3, 3), -1.0, 1.0);
    let kern = conv(w, None);
    let y = iaicd_aggregated(&cst(&x), &kern, &cst(&m), Some(&cst(&delta(3))), IaicdMode::WindowRenormalized).unwrap();
    let cdc = cdc_forward(&cst(&x), &kern, CdcConfig::new(1.0).unwrap()).unwrap();
    assert!(y.value().max_abs_diff(cdc.value()) < 1e-9);
}

#[test]
fn iaicd_of_constant_input_is_zero() {
    let mut r = rng(18);
    let x = Tensor::full(Shape::new(1, 2, 6, 6), -0.3);
    let m = random_tensor(&mut r, Shape::new(1, 3, 6, 6), 0.01, 1.0);
    let kern = conv(random_tensor(&mut r, Shape::new(2, 2, 3, 3), -1.0, 1.0), None);
    let y = iaicd_forward(&cst(&x), &kern, &cst(&m), IaicdMode::WindowRenormalized).unwrap();
    for o in 0..2 {
        for h in 1..5 {
            for w in 1..5 {
                assert!(y.value().get(0, o, h, w).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn iaicd_matches_direct_oracle_in_both_modes() {
    let mut r = rng(19);
    let x = random_tensor(&mut r, Shape::new(1, 1, 5, 5), -1.0, 1.0);
    let m = random_tensor(&mut r, Shape::new(1, 3, 5, 5), 0.01, 1.0);
    let w = random_tensor(&mut r, Shape::new(1, 1, 3, 3), -1.0, 1.0);
    let b = random_tensor(&mut r, Shape::new(1, 1, 1, 1), -1.0, 1.0);
    let kern = conv(w.clone(), Some(b.clone()));
    for (mode, renorm) in [(IaicdMode::WindowRenormalized, true), (IaicdMode::Literal, false)] {
        let y = iaicd_forward(&cst(&x), &kern, &cst(&m), mode).unwrap();
        let oracle = iaicd_direct(&x, &w, Some(&b), &m, None, renorm);
        assert!(y.value().max_abs_diff(&oracle) < 1e-9, "{mode}");
    }
    // wider feature maps cycle through the illumination channels
    let x = random_tensor(&mut r, Shape::new(2, 5, 6, 5), -1.0, 1.0);
    let m = random_tensor(&mut r, Shape::new(2, 3, 6, 5), 0.01, 1.0);
    let w = random_tensor(&mut r, Shape::new(4, 5, 5, 5), -1.0, 1.0);
    let a = random_tensor(&mut r, Shape::new(1, 1, 5, 5), 0.1, 2.0);
    let y = iaicd_aggregated(&cst(&x), &conv(w.clone(), None), &cst(&m), Some(&cst(&a)), IaicdMode::WindowRenormalized)
        .unwrap();
    assert!(y.value().max_abs_diff(&iaicd_direct(&x, &w, None, &m, Some(&a), true)) < 1e-9);
}

#[test]
fn cdc_is_shift_equivariant_on_interior() {
    let mut r = rng(20);
    let x = random_tensor(&mut r, Shape::new(1, 2, 8, 8), -1.0, 1.0);
    let shifted = Tensor::from_fn(x.shape(), |n, c, h, w| if w == 0 { 0.0 } else { x.get(n, c, h, w - 1) });
    let kern = conv(random_tensor(&mut r, Shape::new(2, 2, 3, 3), -1.0, 1.0), None);
    let cfg = CdcConfig::new(0.6).unwrap();
    let y = cdc_forward(&cst(&x), &kern, cfg).unwrap();
    let ys = cdc_forward(&cst(&shifted), &kern, cfg).unwrap();
    for o in 0..2 {
        for h in 1..7 {
            for w in 2..7 {
                assert!((ys.value().get(0, o, h, w) - y.value().get(0, o, h, w - 1)).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn iaicd_is_invariant_to_dc_offsets(seed in any::<u64>(), offset in -5.0f64..5.0) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, Shape::new(1, 3, 7, 7), -1.0, 1.0);
        let m = random_tensor(&mut r, Shape::new(1, 3, 7, 7), 0.01, 1.0);
        let kern = conv(random_tensor(&mut r, Shape::new(2, 3, 3, 3), -1.0, 1.0), None);
        let y = iaicd_forward(&cst(&x), &kern, &cst(&m), IaicdMode::WindowRenormalized).unwrap();
        let shifted = x.map(|v| v + offset);
        let ys = iaicd_forward(&cst(&shifted), &kern, &cst(&m), IaicdMode::WindowRenormalized).unwrap();
        for o in 0..2 {
            for h in 1..6 {
                for w in 1..6 {
                    prop_assert!((y.value().get(0, o, h, w) - ys.value().get(0, o, h, w)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ricd_is_bilinear(seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, Shape::new(1, 2, 6, 6), -1.0, 1.0);
        let z = random_tensor(&mut r, Shape::new(1, 2, 6, 6), -1.0, 1.0);
        let wl = random_tensor(&mut r, Shape::new(2, 2, 5, 5), -1.0, 1.0);
        let wl2 = random_tensor(&mut r, Shape::new(2, 2, 5, 5), -1.0, 1.0);
        let ws = random_tensor(&mut r, Shape::new(2, 2, 3, 3), -1.0, 1.0);
        let step = |x: &Tensor, wl: &Tensor| ricd_step(&cst(x), &conv(wl.clone(), None), &conv(ws.clone(), None)).unwrap().value().clone();
        // linear in x
        let lhs = step(&x.zip_map(&z, |p, q| a * p + q).unwrap(), &wl);
        let rhs = step(&x, &wl).zip_map(&step(&z, &wl), |p, q| a * p + q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        // linear in the large kernel (small kernel held at zero)
        let zero_small = conv(Tensor::zeros(Shape::new(2, 2, 3, 3)), None);
        let s2 = |w: &Tensor| ricd_step(&cst(&x), &conv(w.clone(), None), &zero_small).unwrap().value().clone();
        let lhs = s2(&wl.zip_map(&wl2, |p, q| a * p + q).unwrap());
        let rhs = s2(&wl).zip_map(&s2(&wl2), |p, q| a * p + q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }
}
