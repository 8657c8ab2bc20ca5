//! Throughput of the data-parallel inner loops.
//!
//! Bench IDs carry the compiled backend name, so running
//! `cargo bench -p alis` and `cargo bench -p alis --no-default-features`
//! produces directly comparable `parallel/...` and `sequential/...` entries.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use alis::bounds::simulate_estimator;
use alis::dataset::{generate, GeneratorKind, SyntheticSpec};
use alis::exec;
use alis::model::{LinearModel, LossKind};
use alis::sampling::{optimal_distribution, pseudo_losses};

fn bench_simulate(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("{}/simulate_estimator", exec::backend()));
    group.sample_size(20);
    for &(n_t, trials) in &[(50usize, 20_000usize), (400, 20_000)] {
        let losses: Vec<f64> = (0..n_t).map(|j| 0.5 + (j % 7) as f64).collect();
        let dist = optimal_distribution(&losses).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("n{n_t}_t{trials}")), |b| {
            b.iter(|| simulate_estimator(&losses, &dist, trials, 7).unwrap())
        });
    }
    group.finish();
}

fn bench_pool_scoring(c: &mut Criterion) {
    let mut group = c.benchmark_group(format!("{}/pseudo_losses", exec::backend()));
    group.sample_size(20);
    for &n in &[20_000usize, 200_000] {
        let ds = generate(&SyntheticSpec {
            generator: GeneratorKind::TwoGaussians {
                mean_separation: 3.0,
                covariance_scale: 1.0,
                class_balance: 0.5,
            },
            n,
            d: 8,
            seed: 3,
        })
        .unwrap();
        let model = LinearModel::new(vec![0.3, -0.2, 0.1, 0.4, -0.5, 0.2, 0.0, 0.7], 0.1).unwrap();
        let indices: Vec<usize> = (0..n).collect();
        group.bench_function(BenchmarkId::from_parameter(format!("n{n}")), |b| {
            b.iter(|| pseudo_losses(LossKind::Squared, &model, &ds, &indices).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_simulate, bench_pool_scoring);
criterion_main!(benches);
