use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use sde_gridopt::asymptotics::optimal_profile;
use sde_gridopt::grid::grid_from_density;
use sde_gridopt::matfun::{kt_matrix, mat_exp};
use sde_gridopt::solver::{error_report, mc_verify_mse, run_filter, WienerIncrements};
use sde_gridopt::{StreamKey, TimeGrid, Vector, WeightKind};
use sde_gridopt_bench::{dense_drift, ou, planar};

fn matfun(c: &mut Criterion) {
    let mut g = c.benchmark_group("mat_exp");
    for n in [2, 8, 32] {
        let a = dense_drift(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &a, |b, a| {
            b.iter(|| mat_exp(black_box(a), 0.37).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("kt_matrix");
    for n in [2, 8] {
        let a = dense_drift(n);
        let d = a.transpose() * &a;
        g.bench_with_input(BenchmarkId::from_parameter(n), &(a, d), |b, (a, d)| {
            b.iter(|| kt_matrix(black_box(a), d, 0.01).unwrap())
        });
    }
    g.finish();
}

fn filter(c: &mut Criterion) {
    let model = planar().unwrap();
    let profile = optimal_profile(&model, WeightKind::Terminal).unwrap();
    let grid = grid_from_density(&profile.density, 4096).unwrap();
    let x0 = Vector::from_vec(vec![1.0, 0.0]);
    let key = StreamKey::new(5);
    let increments = WienerIncrements::sample(&grid, model.noise_dim(), &mut key.path(0));

    c.bench_function("error_report/planar/4096", |b| {
        b.iter(|| error_report(&model, black_box(&grid)).unwrap())
    });
    c.bench_function("run_filter/planar/4096", |b| {
        b.iter(|| run_filter(&model, &grid, &x0, black_box(&increments)).unwrap())
    });

    let ou = ou();
    let uniform = TimeGrid::uniform(1.0, 64).unwrap();
    let one = Vector::from_vec(vec![1.0]);
    let mut g = c.benchmark_group("mc_verify");
    g.sample_size(10);
    g.bench_function("ou/64/1000", |b| {
        b.iter(|| mc_verify_mse(&ou, &uniform, &one, 1000, key).unwrap())
    });
    g.finish();
}

fn asymptotics(c: &mut Criterion) {
    let model = planar().unwrap();
    let mut g = c.benchmark_group("optimal_profile");
    g.sample_size(20);
    for kind in [WeightKind::Terminal, WeightKind::Integral] {
        g.bench_with_input(BenchmarkId::from_parameter(kind), &kind, |b, &kind| {
            b.iter(|| optimal_profile(black_box(&model), kind).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, matfun, filter, asymptotics);
criterion_main!(benches);
