use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vulnpatch_bench::{metrics_input, noisy_source, slice_instance};
use vulnpatch_core::compute_metrics;
use vulnpatch_core::eval::normalize;
use vulnpatch_core::scoping::vulnerability_semantics;

fn slicing(c: &mut Criterion) {
    let mut group = c.benchmark_group("vulnerability_semantics");
    for n in [100, 1_000, 5_000] {
        let inst = slice_instance(n, 3, 7);
        group.bench_with_input(BenchmarkId::from_parameter(n), &inst, |b, inst| {
            b.iter(|| vulnerability_semantics(&inst.graph, &inst.spec, &inst.inputs).unwrap())
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let text = noisy_source(2_000, 11);
    c.bench_function("normalize_2000_lines", |b| {
        b.iter(|| normalize(black_box(&text)))
    });
    let (generated, labels) = metrics_input(1_000, 13);
    c.bench_function("compute_metrics_1000_samples", |b| {
        b.iter(|| compute_metrics(black_box(&generated), black_box(&labels)).unwrap())
    });
}

criterion_group!(benches, slicing, evaluation);
criterion_main!(benches);
