//! Parallel vs sequential execution of the two sweep kernels.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use eitats::dynamics::{quantifier_profile_with, pulsed_reference, ProfileOptions, PulseSchedule};
use eitats::par::Execution;
use eitats::scan::{ratio_grid, run_scan, GridSpec};
use eitats::{ModelFamily, ScanConfig};

fn modes() -> [(&'static str, Execution); 2] {
    [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)]
}

fn scan(c: &mut Criterion) {
    let mut group = c.benchmark_group("b_family_scan");
    group.sample_size(10);
    for (name, execution) in modes() {
        let mut cfg = ScanConfig::reference(ModelFamily::B, ratio_grid(0.3, 0.7, 0.05));
        cfg.grid.points = 501;
        cfg.execution = execution;
        group.bench_with_input(BenchmarkId::from_parameter(name), &cfg, |b, cfg| {
            b.iter(|| run_scan(cfg).unwrap())
        });
    }
    group.finish();
}

fn quantifier(c: &mut Criterion) {
    let mut group = c.benchmark_group("quantifier_profile");
    group.sample_size(10);
    let p = pulsed_reference(0.05).with_omega_c_ratio(0.5);
    let schedule = PulseSchedule::default();
    let grid = GridSpec { half_span_gamma13: 4.0, points: 17 }.build(p.gamma13).unwrap();
    for (name, execution) in modes() {
        let opts = ProfileOptions { execution, ..ProfileOptions::default() };
        group.bench_with_input(BenchmarkId::from_parameter(name), &opts, |b, opts| {
            b.iter(|| quantifier_profile_with(&p, &schedule, &grid, 1.0, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scan, quantifier);
criterion_main!(benches);
