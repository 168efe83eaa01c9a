use std::hint::black_box;

use armcoag::closed_form::table;
use armcoag::kinetics::{integrate, rhs};
use armcoag::montecarlo::simulate;
use armcoag::{ConcentrationGrid, DiscreteMeasure, ModelKind, ModelSpec, TruncationSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn convolution(c: &mut Criterion) {
    let mu = DiscreteMeasure::poisson(1.0, 40).unwrap();
    let mut g = c.benchmark_group("convolution_power");
    for m in [10u32, 40, 160] {
        g.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, &m| {
            b.iter(|| mu.convolution_power(black_box(m)).unwrap())
        });
    }
    g.finish();
}

fn closed_form_table(c: &mut Criterion) {
    let spec = ModelSpec::oriented(DiscreteMeasure::poisson(1.0, 40).unwrap()).unwrap();
    let trunc = TruncationSpec::new(39, 40, 1e-8).unwrap();
    // Convolution powers are cached after the first call.
    c.bench_function("table/oriented_poisson_40x40", |b| {
        b.iter(|| table(&spec, black_box(1.0), trunc).unwrap())
    });
}

fn kinetics(c: &mut Criterion) {
    let trunc = TruncationSpec::new(39, 40, 1e-8).unwrap();
    let spec = ModelSpec::oriented(DiscreteMeasure::poisson(1.0, 39).unwrap()).unwrap();
    let state: ConcentrationGrid = table(&spec, 1.0, trunc).unwrap();
    c.bench_function("rhs/oriented_40x40", |b| b.iter(|| rhs(ModelKind::Oriented, black_box(&state))));
    c.bench_function("rhs/symmetric_40x40", |b| b.iter(|| rhs(ModelKind::Symmetric, black_box(&state))));

    let spec = ModelSpec::oriented(DiscreteMeasure::binomial(4, 0.25).unwrap()).unwrap();
    let mut g = c.benchmark_group("integrate");
    g.sample_size(10);
    g.bench_function("oriented_binomial4_40x40_t2", |b| {
        b.iter(|| integrate(&spec, trunc, black_box(2.0), 1e-10).unwrap())
    });
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let spec = ModelSpec::oriented(DiscreteMeasure::poisson(1.0, 30).unwrap()).unwrap();
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    for n in [10_000usize, 100_000] {
        g.bench_with_input(BenchmarkId::new("oriented_poisson_t1", n), &n, |b, &n| {
            b.iter(|| simulate(&spec, n, 1.0, black_box(7), &[]).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, convolution, closed_form_table, kinetics, monte_carlo);
criterion_main!(benches);
