mod common;

use common::{bilinear_direct, block_mean, conv_direct, random_tensor, rng};
use ldcnet::{ConvKernel, Shape, Tensor};
use proptest::prelude::*;

fn grid3() -> Tensor {
    Tensor::from_vec(Shape::new(1, 1, 3, 3), (1..=9).map(f64::from).collect()).unwrap()
}

#[test]
fn delta_kernel_reproduces_input() {
    let x = grid3();
    let kern = ConvKernel::identity(1, 3).unwrap();
    assert_eq!(x.conv2d(&kern, 1, 1).unwrap(), x);
}

#[test]
fn zero_kernel_gives_zero_output() {
    let mut r = rng(1);
    let x = random_tensor(&mut r, Shape::new(2, 3, 6, 5), -1.0, 1.0);
    let kern = ConvKernel::from_weights(Tensor::zeros(Shape::new(4, 3, 3, 3))).unwrap();
    let y = x.conv2d(&kern, 1, 1).unwrap();
    assert_eq!(y.shape(), Shape::new(2, 4, 6, 5));
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn ones_kernel_centre_matches_direct_sum() {
    let x = grid3();
    let w = Tensor::ones(Shape::new(1, 1, 3, 3));
    let y = x.conv2d(&ConvKernel::from_weights(w.clone()).unwrap(), 1, 1).unwrap();
    let oracle = conv_direct(&x, &w, None, 1, 1);
    assert_eq!(oracle.get(0, 0, 1, 1), 45.0);
    assert_eq!(y, oracle);
}

#[test]
fn conv_matches_direct_oracle_across_strides_and_paddings() {
    let mut r = rng(2);
    for (k, stride, pad) in [(1, 1, 0), (3, 1, 1), (3, 2, 1), (5, 1, 2), (5, 2, 0), (7, 1, 3), (3, 1, 0)] {
        let x = random_tensor(&mut r, Shape::new(2, 3, 9, 8), -1.0, 1.0);
        let w = random_tensor(&mut r, Shape::new(4, 3, k, k), -1.0, 1.0);
        let b = random_tensor(&mut r, Shape::new(1, 4, 1, 1), -1.0, 1.0);
        let kern = ConvKernel::new(w.clone(), Some(b.clone())).unwrap();
        let y = x.conv2d(&kern, stride, pad).unwrap();
        let oracle = conv_direct(&x, &w, Some(&b), stride, pad);
        assert_eq!(y.shape(), oracle.shape(), "k={k} s={stride} p={pad}");
        assert!(y.max_abs_diff(&oracle) < 1e-12, "k={k} s={stride} p={pad}");
    }
}

#[test]
fn conv_errors() {
    let x = Tensor::zeros(Shape::new(1, 2, 4, 4));
    let kern = ConvKernel::from_weights(Tensor::zeros(Shape::new(1, 3, 3, 3))).unwrap();
    assert!(matches!(x.conv2d(&kern, 1, 1), Err(ldcnet::Error::Shape(_))));
    assert!(matches!(
        ConvKernel::from_weights(Tensor::zeros(Shape::new(1, 2, 4, 4))),
        Err(ldcnet::Error::Config(_))
    ));
}

#[test]
fn block_mean_oracle_agrees() {
    let mut r = rng(3);
    let x = random_tensor(&mut r, Shape::new(1, 3, 8, 8), -2.0, 2.0);
    assert!(x.avg_downsample2().unwrap().max_abs_diff(&block_mean(&x)) < 1e-15);
}

#[test]
fn bilinear_oracle_agrees() {
    let mut r = rng(4);
    let x = random_tensor(&mut r, Shape::new(1, 2, 4, 4), -2.0, 2.0);
    let y = x.upsample2_bilinear();
    assert_eq!(y.shape(), Shape::new(1, 2, 8, 8));
    assert!(y.max_abs_diff(&bilinear_direct(&x)) < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0, k in prop::sample::select(vec![1usize, 3, 5])) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, Shape::new(1, 2, 6, 7), -1.0, 1.0);
        let z = random_tensor(&mut r, Shape::new(1, 2, 6, 7), -1.0, 1.0);
        let kern = ConvKernel::from_weights(random_tensor(&mut r, Shape::new(3, 2, k, k), -1.0, 1.0)).unwrap();
        let mix = x.zip_map(&z, |p, q| a * p + b * q).unwrap();
        let lhs = mix.conv2d(&kern, 1, k / 2).unwrap();
        let cx = x.conv2d(&kern, 1, k / 2).unwrap();
        let cz = z.conv2d(&kern, 1, k / 2).unwrap();
        let rhs = cx.zip_map(&cz, |p, q| a * p + b * q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-9);
    }

    #[test]
    fn finite_inputs_give_finite_outputs(seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, Shape::new(1, 2, 4, 6), -1e3, 1e3);
        prop_assert!(x.upsample2_bilinear().all_finite());
        prop_assert!(x.avg_downsample2().unwrap().all_finite());
    }
}
