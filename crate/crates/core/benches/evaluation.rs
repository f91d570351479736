use cfcc_core::chance::{AffineChanceConstraint, DenseAffine, EvalOptions};
use cfcc_core::{parallel, Distribution};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn constraints() -> Vec<AffineChanceConstraint<DenseAffine>> {
    let w = vec![
        Distribution::exponential(1.0).unwrap(),
        Distribution::exponential(0.5).unwrap(),
        Distribution::exponential(2.0).unwrap(),
    ];
    (0..48)
        .map(|k| {
            let s = 1.0 + 0.05 * k as f64;
            let f = DenseAffine::new(
                -4.0 * s,
                vec![0.3, -0.1],
                vec![0.5 * s, 0.2, 0.8],
                vec![vec![0.1, 0.0], vec![0.0, 0.2], vec![0.0, 0.0]],
            )
            .unwrap();
            AffineChanceConstraint::new(f, w.clone(), 0.95).unwrap()
        })
        .collect()
}

fn batch(c: &mut Criterion) {
    let cs = constraints();
    let z = [0.4, -0.2];
    let opts = EvalOptions::default();
    let mut group = c.benchmark_group("constraint_batch");
    group.bench_function("parallel", |b| {
        b.iter(|| parallel::map(&cs, |c| c.evaluate(black_box(&z), &opts, true).unwrap().probability))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| parallel::map_sequential(&cs, |c| c.evaluate(black_box(&z), &opts, true).unwrap().probability))
    });
    group.finish();
}

fn single(c: &mut Criterion) {
    let cs = constraints();
    let z = [0.4, -0.2];
    let shared = EvalOptions::default();
    let unshared = EvalOptions { share: false, ..shared };
    let mut group = c.benchmark_group("single_constraint");
    group.bench_function("shared_intermediates", |b| b.iter(|| cs[0].evaluate(black_box(&z), &shared, true).unwrap()));
    group.bench_function("recomputed_intermediates", |b| {
        b.iter(|| cs[0].evaluate(black_box(&z), &unshared, true).unwrap())
    });
    group.finish();
}

criterion_group!(benches, batch, single);
criterion_main!(benches);
