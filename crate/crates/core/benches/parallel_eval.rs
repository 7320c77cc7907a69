//! Compares sequential and parallel batch evaluation on a delayed oracle and
//! a compute-only oracle. Build with `--no-default-features` to measure the
//! sequential fallback path.

use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use faultline_core::engine::{Engine, EngineConfig, OracleBackend, PipelineBackend};
use faultline_core::model::{ParamKind, Parameter, ParameterSpace, PipelineInstance, Value};

fn bench_space() -> ParameterSpace {
    ParameterSpace::new(
        (0..5)
            .map(|i| Parameter {
                name: format!("p{}", i + 1),
                kind: ParamKind::Ordinal,
                domain: (1..=6).map(Value::Int).collect(),
            })
            .collect(),
    )
    .unwrap()
}

fn instances(space: &ParameterSpace, count: usize) -> Vec<PipelineInstance> {
    let mut out = Vec::with_capacity(count);
    let mut idx = 0usize;
    while out.len() < count {
        let mut values = Vec::with_capacity(space.len());
        let mut rest = idx;
        for p in 0..space.len() {
            let n = space.param(p).domain.len();
            values.push(space.param(p).domain[rest % n].clone());
            rest /= n;
        }
        out.push(space.instance(values).unwrap());
        idx += 1;
    }
    out
}

fn delayed_engine(workers: usize, delay: Duration) -> Engine {
    let space = bench_space();
    let cause = space.parse_dnf("p1 = 1 AND p2 = 2").unwrap();
    let mut oracle = OracleBackend::new(cause);
    oracle.delay = delay;
    Engine::new(
        space,
        PipelineBackend::Oracle(oracle),
        EngineConfig {
            workers,
            budget: None,
        },
    )
}

fn bench_delayed_batch(c: &mut Criterion) {
    let space = bench_space();
    let batch = instances(&space, 64);
    let mut group = c.benchmark_group("delayed_batch_64x500us");
    group.sample_size(10);
    for workers in [1usize, 2, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter_batched(
                || delayed_engine(w, Duration::from_micros(500)),
                |engine| engine.evaluate_batch(&batch, "bench"),
                criterion::BatchSize::PerIteration,
            );
        });
    }
    group.finish();
}

fn bench_compute_batch(c: &mut Criterion) {
    let space = bench_space();
    let batch = instances(&space, 4096);
    let mut group = c.benchmark_group("compute_batch_4096");
    group.sample_size(10);
    for workers in [1usize, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter_batched(
                || delayed_engine(w, Duration::ZERO),
                |engine| engine.evaluate_batch(&batch, "bench"),
                criterion::BatchSize::PerIteration,
            );
        });
    }
    group.finish();
}

criterion_group!(benches, bench_delayed_batch, bench_compute_batch);
criterion_main!(benches);
