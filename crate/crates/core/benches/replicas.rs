use std::hint::black_box;

use coflow::exec::{fold_replicas_with, map_replicas_with};
use coflow::{simulate_flow_replica, DriftSpec, Executor, LatticeSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn flows(c: &mut Criterion) {
    let spec = LatticeSpec::new(0.0, 50, 0.01, -1.0, 1.0, 0.02);
    let drift = DriftSpec::Sine { amplitude: 1.0, wavenumber: 1.0 };
    let mut group = c.benchmark_group("flow_replicas");
    group.sample_size(10);
    for exec in [Executor::Sequential, Executor::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                map_replicas_with(exec, 32, |r| {
                    simulate_flow_replica(&spec, &drift, 7, r).map(|f| f.particle_steps()).unwrap_or(0)
                })
            })
        });
    }
    group.finish();
}

fn fold(c: &mut Criterion) {
    let mut group = c.benchmark_group("fold_replicas");
    for exec in [Executor::Sequential, Executor::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| {
                fold_replicas_with(
                    exec,
                    black_box(100_000),
                    || 0.0f64,
                    |acc, r| *acc += ((r as f64) * 0.618).sin(),
                    |a, b| a + b,
                )
            })
        });
    }
    group.finish();
}

criterion_group!(benches, flows, fold);
criterion_main!(benches);
