use std::hint::black_box;

use conflow_bench::{random_state, SIZES};
use conflow_core::flow::{vector_field_fast, vector_field_naive};
use conflow_core::linearized::{build_ground_ops, stability_spectrum};
use conflow_core::observables::{energy_fast, energy_naive};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn energy(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy");
    for n in SIZES {
        let alpha = random_state(n, n as u64);
        group.bench_with_input(BenchmarkId::new("fast", n), &alpha, |b, a| {
            b.iter(|| energy_fast(black_box(a)))
        });
        // quartic, so only the small sizes
        if n <= 64 {
            group.bench_with_input(BenchmarkId::new("naive", n), &alpha, |b, a| {
                b.iter(|| energy_naive(black_box(a)).unwrap())
            });
        }
    }
    group.finish();
}

fn field(c: &mut Criterion) {
    let mut group = c.benchmark_group("vector_field");
    for n in SIZES {
        let alpha = random_state(n, 7 + n as u64);
        group.bench_with_input(BenchmarkId::new("fast", n), &alpha, |b, a| {
            b.iter(|| vector_field_fast(black_box(a)))
        });
        if n <= 64 {
            group.bench_with_input(BenchmarkId::new("naive", n), &alpha, |b, a| {
                b.iter(|| vector_field_naive(black_box(a)))
            });
        }
    }
    group.finish();
}

fn spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("stability_spectrum");
    group.sample_size(10);
    for n in [64, 128] {
        let ops = build_ground_ops(0.5, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &ops, |b, ops| {
            b.iter(|| stability_spectrum(black_box(ops)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, energy, field, spectrum);
criterion_main!(benches);
