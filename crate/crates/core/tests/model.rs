use cmrp::dist::Law;
use cmrp::presets::default_preset;
use cmrp::rng::{path_rng, Stream};
use cmrp::stats::{ks_critical_1pct, ks_statistic};
use cmrp::{Expr, Kernel, Mixing, Path, RiskModel, StopRule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gamma_kernel_model() -> RiskModel {
    RiskModel::new(
        Mixing::single(Law::Gamma { rate: 3.0, shape: 3.0 }),
        Kernel::Gamma { rate: Expr::parse("theta").unwrap(), shape: 1.2 },
        Law::Exponential { rate: 1.0 },
    )
    .unwrap()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn conditional_interarrivals_are_iid_kernel_draws() {
    let model = gamma_kernel_model();
    let n = 20_000;
    let path = model.simulate_given([2.0, 0.0], StopRule::Claims(n), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let k = Law::Gamma { rate: 2.0, shape: 1.2 };
    let d = ks_statistic(&path.interarrivals, |x| k.cdf(x));
    assert!(d < ks_critical_1pct(n), "D = {d}");
    let (m, v) = mean_var(&path.interarrivals);
    let w = &path.interarrivals;
    let lag1 = w.windows(2).map(|p| (p[0] - m) * (p[1] - m)).sum::<f64>() / ((n - 1) as f64 * v);
    assert!(lag1.abs() < 4.0 / (n as f64).sqrt(), "lag-1 correlation {lag1}");
    let d = ks_statistic(&path.claims, |x| model.claims.cdf(x));
    assert!(d < ks_critical_1pct(n));
}

#[test]
fn mixing_makes_counts_overdispersed() {
    let model = gamma_kernel_model();
    let counts: Vec<f64> = (0..20_000)
        .map(|i| {
            let mut rng = path_rng(11, Stream::P, i);
            let p = model.simulate_path(StopRule::Horizon(10.0), &mut rng).unwrap();
            p.count_at(10.0).unwrap() as f64
        })
        .collect();
    let (m, v) = mean_var(&counts);
    assert!(v > 1.5 * m, "mean {m}, variance {v}");

    // pinned θ with an exponential kernel is Poisson: variance equals mean
    let poisson = RiskModel::new(Mixing::fixed(2.0), Kernel::exponential_theta(), Law::Exponential { rate: 1.0 }).unwrap();
    let counts: Vec<f64> = (0..20_000)
        .map(|i| {
            let mut rng = path_rng(12, Stream::P, i);
            poisson.simulate_path(StopRule::Horizon(5.0), &mut rng).unwrap().count_at(5.0).unwrap() as f64
        })
        .collect();
    let (m, v) = mean_var(&counts);
    assert!((m - 10.0).abs() < 0.1 && (v / m - 1.0).abs() < 0.05, "mean {m}, variance {v}");
}

#[test]
fn mixing_parameter_is_independent_of_claims() {
    let model = gamma_kernel_model();
    let pairs: Vec<(f64, f64)> = (0..20_000)
        .map(|i| {
            let mut rng = path_rng(13, Stream::P, i);
            let p = model.simulate_path(StopRule::Claims(1), &mut rng).unwrap();
            (p.theta[0], p.claims[0])
        })
        .collect();
    let n = pairs.len() as f64;
    let (mt, vt) = mean_var(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let (mx, vx) = mean_var(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let cov = pairs.iter().map(|(t, x)| (t - mt) * (x - mx)).sum::<f64>() / (n - 1.0);
    let corr = cov / (vt * vx).sqrt();
    assert!(corr.abs() < 4.0 / n.sqrt(), "{corr}");
}

#[test]
fn same_seed_same_path() {
    let p = default_preset("example1").unwrap();
    let a = p.model.simulate_path(StopRule::Horizon(20.0), &mut path_rng(9, Stream::P, 4)).unwrap();
    let b = p.model.simulate_path(StopRule::Horizon(20.0), &mut path_rng(9, Stream::P, 4)).unwrap();
    assert_eq!(a, b);
    let c = p.model.simulate_path(StopRule::Horizon(20.0), &mut path_rng(9, Stream::P, 5)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn horizon_paths_record_the_first_arrival_after() {
    let model = gamma_kernel_model();
    let p = model.simulate_path(StopRule::Horizon(3.0), &mut path_rng(1, Stream::P, 0)).unwrap();
    assert!(p.arrivals.iter().all(|a| *a <= 3.0));
    assert!(p.next_arrival.unwrap() > 3.0);
    assert!(p.count_at(3.5).is_err());
}

#[test]
fn two_dimensional_mixing_expectations() {
    let p = default_preset("example1").unwrap();
    // each coordinate is 1 + Ga(rate 1, shape 2), with mean 3
    let m = p.model.mixing.expect(|th| th[0] + th[1]).unwrap().value;
    assert!((m - 6.0).abs() < 1e-8);
    let m = p.model.mixing.expect(|th| th[0] * th[1]).unwrap().value;
    assert!((m - 9.0).abs() < 1e-8);
}

fn sorted_arrivals() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((0.001f64..3.0, 0.0f64..10.0), 0..60).prop_map(|v| {
        let mut t = 0.0;
        let arrivals = v.iter().map(|(w, _)| {
            t += w;
            t
        });
        (arrivals.collect(), v.iter().map(|(_, x)| *x).collect())
    })
}

proptest! {
    #[test]
    fn counting_and_aggregates_match_linear_scan((arrivals, claims) in sorted_arrivals(), frac in 0.0f64..1.0) {
        let horizon = arrivals.last().copied().unwrap_or(0.0) + 1.0;
        let path = Path::from_parts([1.0, 0.0], arrivals.clone(), claims.clone(), StopRule::Horizon(horizon)).unwrap();
        let t = frac * horizon;
        let n = arrivals.iter().filter(|a| **a <= t).count();
        prop_assert_eq!(path.count_at(t).unwrap(), n);
        let s: f64 = claims[..n].iter().sum();
        prop_assert!((path.aggregate_at(t).unwrap() - s).abs() <= 1e-12 * (1.0 + s));
        let last = if n == 0 { 0.0 } else { arrivals[n - 1] };
        prop_assert!((path.residual_at(t).unwrap() - (t - last)).abs() < 1e-12);
        // exactly at an arrival epoch the claim is counted
        for (k, a) in arrivals.iter().enumerate() {
            prop_assert_eq!(path.count_at(*a).unwrap(), k + 1);
        }
    }
}
