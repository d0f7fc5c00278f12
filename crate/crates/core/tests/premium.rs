use cmrp::premium::{
    conditional_premium_density, mixed_premium_density, mixed_q_premium, ordering_report, q_premium,
    q_premium_routes, wang_premium, Verdict,
};
use cmrp::presets::{default_preset, preset, NAMES};
use cmrp::rng::{path_rng, Stream};
use cmrp::Law;
use proptest::prelude::*;
use std::collections::BTreeMap;

#[test]
fn wang_premium_closed_forms() {
    let u = Law::Uniform { lo: 0.0, hi: 1.0 };
    for c in [1.0, 1.5, 2.0, 4.0] {
        assert!((wang_premium(&u, c).unwrap().value - c / (1.0 + c)).abs() < 1e-10);
    }
    let e = Law::Exponential { rate: 0.5 };
    assert!((wang_premium(&e, 3.0).unwrap().value - 6.0).abs() < 1e-8);
    let d = Law::FiniteDiscrete { atoms: vec![1.0, 3.0], weights: vec![0.75, 0.25] };
    // 1 + 2·(1/4)^{1/2}
    assert_eq!(wang_premium(&d, 2.0).unwrap().value, 2.0);
    assert!(wang_premium(&u, 0.5).is_err());
}

#[test]
fn wang_tilt_reproduces_the_risk_adjusted_premium() {
    let p = default_preset("example3").unwrap();
    let pi = wang_premium(&p.model.claims, 1.5).unwrap().value;
    assert!((pi - 0.6).abs() < 1e-10);
    for th in [0.2, 1.0, 3.0] {
        let q = q_premium(&p.model, &p.tilt, [th, 0.0]).unwrap();
        assert!((q - th * pi).abs() < 1e-9 * th, "{q}");
    }
    // Θ under the tilt is Ga(rate 3.5, shape 2)
    let m = mixed_q_premium(&p.model, &p.tilt).unwrap().value;
    assert!((m - 2.0 / 3.5 * pi).abs() < 1e-8, "{m}");
}

#[test]
fn q_premium_routes_agree_for_all_presets() {
    for name in NAMES {
        let p = default_preset(name).unwrap();
        for th in p.model.mixing.quantile_grid(6).unwrap() {
            let r = q_premium_routes(&p.model, &p.tilt, th).unwrap();
            assert!(r.relative_gap() < 1e-8, "{name} {th:?}: {r:?}");
        }
    }
}

#[test]
fn mixed_premium_quadrature_matches_sampling() {
    let p = default_preset("example1").unwrap();
    let n = 1_000_000;
    let mut rng = path_rng(31, Stream::Mixing, 0);
    let xs: Vec<f64> =
        (0..n).map(|_| conditional_premium_density(&p.model, p.model.mixing.sample(&mut rng)).unwrap()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    let q = mixed_premium_density(&p.model).unwrap().value;
    assert!((mean - q).abs() < 4.0 * sd / (n as f64).sqrt(), "{mean} vs {q}");
}

#[test]
fn reversal_needs_large_b2() {
    let mut o = BTreeMap::new();
    o.insert("b2".to_string(), 3.5);
    // b₂ must exceed b₁k/d = 3.6
    assert!(preset("example2-cou", &o).is_err());
    o.insert("b2".to_string(), 3.7);
    let p = preset("example2-cou", &o).unwrap();
    let grid = p.model.mixing.quantile_grid(32).unwrap();
    let r = ordering_report(&p.model, &p.tilt, &grid).unwrap();
    assert_eq!((r.pointwise, r.mixed), (Verdict::Less, Verdict::Greater));
    assert!(r.pass);
}

#[test]
fn identity_tilt_gives_equal_premiums_for_poisson() {
    let p = default_preset("exp-exp-ruin").unwrap();
    let tilt = cmrp::Tilt::identity(&p.model);
    let grid = p.model.mixing.quantile_grid(16).unwrap();
    let r = ordering_report(&p.model, &tilt, &grid).unwrap();
    assert_eq!((r.pointwise, r.mixed), (Verdict::Equal, Verdict::Equal));
}

proptest! {
    #[test]
    fn wang_premium_increases_with_loading(a in 1.0f64..5.0, b in 1.0f64..5.0, shape in 0.5f64..4.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for law in [Law::Gamma { rate: 1.0, shape }, Law::Beta { p: shape, q: 2.0 }] {
            let x = wang_premium(&law, lo).unwrap().value;
            let y = wang_premium(&law, hi).unwrap().value;
            prop_assert!(x <= y + 1e-9);
            // c = 1 is the plain mean
            prop_assert!((wang_premium(&law, 1.0).unwrap().value - law.mean().unwrap()).abs() < 1e-8);
        }
    }
}
