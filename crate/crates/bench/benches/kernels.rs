use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use euler_align::grid::{grid_step, PeriodicKernel, Reconstruction};
use euler_align::kernels::make_builtin;
use euler_align::measures::{flat_metric, wasserstein};
use euler_align::particles::rhs_u;
use euler_align_bench::{bump_grid, measure, particle_state};

fn bench_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("metrics");
    for n in [8usize, 32, 128] {
        let mu = measure(n, 2, 0.0);
        let nu = measure(n, 2, 0.37);
        group.bench_with_input(BenchmarkId::new("flat_metric_2d", n), &n, |b, _| {
            b.iter(|| flat_metric(black_box(&mu), black_box(&nu)).unwrap())
        });
        let mu1 = measure(n, 1, 0.0);
        let nu1 = measure(n, 1, 0.37);
        group.bench_with_input(BenchmarkId::new("w2_1d", n), &n, |b, _| {
            b.iter(|| wasserstein(black_box(&mu1), black_box(&nu1), 2).unwrap())
        });
    }
    group.finish();
}

fn bench_rhs(c: &mut Criterion) {
    let mut group = c.benchmark_group("rhs_u");
    let k = make_builtin("smoothed_norm", &[0.5], 2).unwrap();
    for n in [64usize, 256, 1024] {
        let s = particle_state(n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| rhs_u(black_box(&s), &k).unwrap())
        });
    }
    group.finish();
}

fn bench_grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_step");
    let k = make_builtin("quadratic", &[], 1).unwrap();
    for m in [256usize, 512, 1024] {
        let g = bump_grid(m, 0.01);
        let pk = PeriodicKernel::new(&k, g.length, m).unwrap();
        let dt = g.max_dt(&pk);
        group.bench_with_input(BenchmarkId::from_parameter(m), &m, |b, _| {
            b.iter(|| grid_step(black_box(&g), &pk, dt, Reconstruction::Minmod).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_metrics, bench_rhs, bench_grid);
criterion_main!(benches);
