mod common;

use common::{random_tensor, relative_error, rng, smoothness_direct};
use ldcnet::diffconv::RicdConfig;
use ldcnet::enhance::{
    estimate_illumination, fidelity_loss, retinex_enhance, smoothness_loss, EnhanceHead, IlluminationMap,
    ILLUMINATION_FLOOR,
};
use ldcnet::params::ParamStore;
use ldcnet::{autograd as ag, Shape, Tensor, Var};

fn small_cfg() -> RicdConfig {
    RicdConfig {
        hidden_channels: 4,
        ..RicdConfig::default()
    }
}

fn head_store(seed: u64) -> ParamStore {
    ParamStore::init(&EnhanceHead::param_specs("enhance", &small_cfg()), seed).unwrap()
}

fn map(t: Tensor) -> IlluminationMap {
    IlluminationMap::new(Var::constant(t), ILLUMINATION_FLOOR).unwrap()
}

#[test]
fn illumination_stays_within_floor_and_one() {
    let mut r = rng(30);
    let store = head_store(1);
    let head = EnhanceHead::from_params(&store.vars(false), "enhance", small_cfg(), ILLUMINATION_FLOOR).unwrap();
    for _ in 0..3 {
        let x = random_tensor(&mut r, Shape::new(2, 3, 12, 10), 0.0, 1.0);
        let m = estimate_illumination(&Var::constant(x), &head).unwrap();
        assert!(m.values().value().data().iter().all(|&v| (ILLUMINATION_FLOOR..=1.0).contains(&v)));
    }
}

#[test]
fn zero_output_projection_gives_midpoint_illumination() {
    let mut store = head_store(2);
    store.get_mut("enhance.output.weight").unwrap().data_mut().fill(0.0);
    let head = EnhanceHead::from_params(&store.vars(false), "enhance", small_cfg(), ILLUMINATION_FLOOR).unwrap();
    let x = random_tensor(&mut rng(31), Shape::new(1, 3, 8, 8), 0.0, 1.0);
    let m = estimate_illumination(&Var::constant(x), &head).unwrap();
    let expected = ILLUMINATION_FLOOR + (1.0 - ILLUMINATION_FLOOR) * 0.5;
    assert!(m.values().value().data().iter().all(|&v| v == expected));
}

#[test]
fn illumination_is_reproducible() {
    let x = random_tensor(&mut rng(32), Shape::new(1, 3, 8, 8), 0.0, 1.0);
    let run = || {
        let store = head_store(3);
        let head = EnhanceHead::from_params(&store.vars(false), "enhance", small_cfg(), ILLUMINATION_FLOOR).unwrap();
        estimate_illumination(&Var::constant(x.clone()), &head).unwrap().values().value().clone()
    };
    let (a, b) = (run(), run());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn estimation_rejects_non_rgb_input() {
    let store = head_store(4);
    let head = EnhanceHead::from_params(&store.vars(false), "enhance", small_cfg(), ILLUMINATION_FLOOR).unwrap();
    let x = Var::constant(Tensor::zeros(Shape::new(1, 1, 8, 8)));
    assert!(matches!(estimate_illumination(&x, &head), Err(ldcnet::Error::Shape(_))));
}

#[test]
fn retinex_examples() {
    let s = Shape::new(1, 3, 4, 4);
    let x = random_tensor(&mut rng(33), s, 0.0, 1.0);
    let out = retinex_enhance(&Var::constant(x.clone()), &map(Tensor::ones(s))).unwrap();
    assert_eq!(out.value(), &x);

    let out = retinex_enhance(&Var::constant(Tensor::full(s, 0.2)), &map(Tensor::full(s, 0.5))).unwrap();
    assert!(out.value().data().iter().all(|&v| (v - 0.4).abs() < 1e-15));

    let out = retinex_enhance(&Var::constant(Tensor::full(s, 0.5)), &map(Tensor::full(s, ILLUMINATION_FLOOR))).unwrap();
    assert!(out.value().data().iter().all(|&v| v == 1.0));
}

#[test]
fn retinex_rejects_maps_below_floor() {
    let s = Shape::new(1, 3, 2, 2);
    assert!(matches!(
        IlluminationMap::new(Var::constant(Tensor::full(s, 0.001)), ILLUMINATION_FLOOR),
        Err(ldcnet::Error::Domain(_))
    ));
}

#[test]
fn enhancement_never_darkens() {
    let mut r = rng(34);
    let s = Shape::new(1, 3, 6, 6);
    for _ in 0..20 {
        let x = random_tensor(&mut r, s, 0.0, 1.0);
        let m = random_tensor(&mut r, s, ILLUMINATION_FLOOR, 1.0);
        let out = retinex_enhance(&Var::constant(x.clone()), &map(m)).unwrap();
        assert!(out.value().mean() >= x.mean());
        assert!(out.value().data().iter().zip(x.data()).all(|(o, i)| o >= i));
    }
}

#[test]
fn fidelity_examples() {
    let mut r = rng(35);
    let s = Shape::new(1, 3, 4, 5);
    let x = random_tensor(&mut r, s, 0.1, 0.8);
    assert_eq!(fidelity_loss(&map(x.clone()), &Var::constant(x.clone())).unwrap().value().item().unwrap(), 0.0);

    let shifted = x.map(|v| v + 0.1);
    let lf = fidelity_loss(&map(shifted), &Var::constant(x.clone())).unwrap().value().item().unwrap();
    assert!((lf - 0.01).abs() < 1e-12);

    let m = random_tensor(&mut r, s, 0.01, 1.0);
    let lf = fidelity_loss(&map(m.clone()), &Var::constant(x.clone())).unwrap().value().item().unwrap();
    let oracle = m.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.numel() as f64;
    assert!((lf - oracle).abs() < 1e-12);
}

#[test]
fn smoothness_examples() {
    let s = Shape::new(1, 3, 6, 7);
    let constant = smoothness_loss(&map(Tensor::full(s, 0.3))).unwrap();
    assert_eq!(constant.value().item().unwrap(), 0.0);

    let mut spike = Tensor::full(Shape::new(1, 1, 5, 5), ILLUMINATION_FLOOR);
    spike.set(0, 0, 2, 2, ILLUMINATION_FLOOR + 0.9);
    let ls = smoothness_loss(&map(spike.clone())).unwrap().value().item().unwrap();
    assert!((ls - smoothness_direct(&spike)).abs() < 1e-12);

    // homogeneity: |λa − λb| = λ|a − b|; scaled maps must stay inside the floor bound
    let mut r = rng(36);
    let m = random_tensor(&mut r, s, 0.1, 0.5);
    let base = smoothness_loss(&map(m.clone())).unwrap().value().item().unwrap();
    let scaled = smoothness_loss(&map(m.map(|v| 2.0 * v))).unwrap().value().item().unwrap();
    assert!((scaled - 2.0 * base).abs() < 1e-12);
    assert!((base - smoothness_direct(&m)).abs() < 1e-12);
}

#[test]
fn smoothness_rejects_small_maps() {
    assert!(matches!(
        smoothness_loss(&map(Tensor::full(Shape::new(1, 3, 4, 8), 0.5))),
        Err(ldcnet::Error::Domain(_))
    ));
}

#[test]
fn enhancement_losses_pass_finite_difference_check() {
    // Default width: with very narrow heads whole regions go relu-dead, the map
    // develops exact plateaus and central differences straddle the |m_i - m_j| kink.
    let cfg = RicdConfig::default();
    let x = random_tensor(&mut rng(37), Shape::new(1, 3, 8, 8), 0.0, 0.4);
    let store = ParamStore::init(&EnhanceHead::param_specs("enhance", &cfg), 5).unwrap();
    let loss_of = |store: &ParamStore, track: bool| {
        let vars = store.vars(track);
        let head = EnhanceHead::from_params(&vars, "enhance", cfg, ILLUMINATION_FLOOR).unwrap();
        let xv = Var::constant(x.clone());
        let m = estimate_illumination(&xv, &head).unwrap();
        let l = ag::add(&fidelity_loss(&m, &xv).unwrap(), &smoothness_loss(&m).unwrap()).unwrap();
        (l, vars)
    };
    let (loss, vars) = loss_of(&store, true);
    loss.backward().unwrap();
    let grads = vars.grads();
    let mut worst: f64 = 0.0;
    for (path, grad) in &grads {
        let t = store.get(path).unwrap();
        // a handful of entries per tensor keeps this fast
        let picks: Vec<usize> = (0..t.numel()).step_by((t.numel() / 6).max(1)).collect();
        for &i in &picks {
            let f = |delta: f64| {
                let mut s = store.clone();
                s.get_mut(path).unwrap().data_mut()[i] += delta;
                loss_of(&s, false).0.value().item().unwrap()
            };
            let h = 1e-5;
            let fd = (f(h) - f(-h)) / (2.0 * h);
            let err = relative_error(grad.data()[i], fd);
            worst = worst.max(err);
            assert!(err < 1e-4, "{path}[{i}]: analytic {} fd {fd}", grad.data()[i]);
        }
    }
    assert!(worst < 1e-4);
}
