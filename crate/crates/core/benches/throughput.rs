//! Single-thread versus pooled throughput of the data-parallel hot paths.
//!
//! Build with `--no-default-features` to measure the sequential fallback;
//! with the default `parallel` feature the "sequential" rows run on a
//! one-thread rayon pool.

use std::hint::black_box;

use coral::data::{generate_synthetic, SyntheticParams};
use coral::loss::{loss_and_grad, TaskWeights};
use coral::metrics::{audit_split, CostMatrix};
use coral::model::{Architecture, HeadKind, DEFAULT_HIDDEN};
use coral::optim::verify_ordered_biases;
use coral::{par, OrdinalModel};
use criterion::{criterion_group, criterion_main, Criterion};

fn bench_gradient(c: &mut Criterion) {
    let data = generate_synthetic(&SyntheticParams::default()).unwrap();
    let arch = Architecture::new(4, DEFAULT_HIDDEN.to_vec(), HeadKind::Coral, 6).unwrap();
    let model = OrdinalModel::new(arch, 0).unwrap();
    let batch = data.examples();
    let lambda = TaskWeights::uniform(5);
    c.benchmark_group("loss_and_grad/2000")
        .sample_size(20)
        .bench_function("sequential", |b| {
            b.iter(|| par::single_threaded(|| loss_and_grad(black_box(&model), &batch, &lambda).unwrap()))
        })
        .bench_function("parallel", |b| {
            b.iter(|| loss_and_grad(black_box(&model), &batch, &lambda).unwrap())
        });
}

fn bench_audit(c: &mut Criterion) {
    let data = generate_synthetic(&SyntheticParams::default()).unwrap();
    let arch = Architecture::new(4, DEFAULT_HIDDEN.to_vec(), HeadKind::Or, 6).unwrap();
    let model = OrdinalModel::new(arch, 0).unwrap();
    let costs = vec![("absolute".to_string(), CostMatrix::absolute(6).unwrap())];
    c.benchmark_group("audit/2000")
        .sample_size(20)
        .bench_function("sequential", |b| {
            b.iter(|| par::single_threaded(|| audit_split(black_box(&model), &data, &costs).unwrap()))
        })
        .bench_function("parallel", |b| {
            b.iter(|| audit_split(black_box(&model), &data, &costs).unwrap())
        });
}

fn bench_bias_trials(c: &mut Criterion) {
    c.benchmark_group("ordered_biases/100")
        .sample_size(10)
        .bench_function("sequential", |b| {
            b.iter(|| par::single_threaded(|| verify_ordered_biases(100, black_box(0), 1e-9).unwrap()))
        })
        .bench_function("parallel", |b| {
            b.iter(|| verify_ordered_biases(100, black_box(0), 1e-9).unwrap())
        });
}

criterion_group!(benches, bench_gradient, bench_audit, bench_bias_trials);
criterion_main!(benches);
