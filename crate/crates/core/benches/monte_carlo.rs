use std::time::Duration;

use cmrp::diagnostics::{martingale_unit_mean, McConfig};
use cmrp::presets::default_preset;
use cmrp::ruin::ruin_prob_is;
use cmrp::Exec;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn executors() -> Vec<(&'static str, Exec)> {
    let mut v = vec![("sequential", Exec::Sequential)];
    if cfg!(feature = "parallel") {
        v.push(("parallel", Exec::Parallel { threads: None }));
    }
    v
}

fn martingale(c: &mut Criterion) {
    let mut group = c.benchmark_group("martingale_unit_mean");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for name in ["example1", "example2", "example3"] {
        let p = default_preset(name).unwrap();
        for (label, exec) in executors() {
            let cfg = McConfig::new(20_000, 1).with_exec(exec);
            group.bench_with_input(BenchmarkId::new(label, name), &cfg, |b, cfg| {
                b.iter(|| martingale_unit_mean(&p.model, &p.tilt, &[1.0, 5.0, 10.0], *cfg).unwrap())
            });
        }
    }
    group.finish();
}

fn ruin(c: &mut Criterion) {
    let mut group = c.benchmark_group("ruin_prob_is");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    let p = default_preset("exp-exp-ruin").unwrap();
    for (label, exec) in executors() {
        let cfg = McConfig::new(5_000, 1).with_exec(exec);
        group.bench_with_input(BenchmarkId::new(label, "u=2"), &cfg, |b, cfg| {
            b.iter(|| ruin_prob_is(&p.model, &p.tilt, 2.0, 100_000, *cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, martingale, ruin);
criterion_main!(benches);
