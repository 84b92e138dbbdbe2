use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use villain_bench::{free_box, rng, warm_iv, warm_villain, SIZES};
use villain_core::calculus::{neg_laplacian, Form};
use villain_core::ig::{ig_sample, IGParams};
use villain_core::samplers::CoulombMetropolis;

fn villain_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("villain_sweep");
    for n in SIZES {
        let g = free_box(n);
        let (mut hb, mut s, mut r) = warm_villain(&g, 1.0, 20);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| hb.sweep(&g, &mut s, &mut r)));
    }
    group.finish();
}

fn iv_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("iv_sweep");
    for n in SIZES {
        let g = free_box(n);
        let (hb, mut s, mut r) = warm_iv(&g, 1.0, 20);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| hb.sweep(&mut s, &mut r)));
    }
    group.finish();
}

fn metropolis_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("metropolis_sweep");
    for n in SIZES {
        let g = free_box(n);
        let mut mh = CoulombMetropolis::new(&g, 2, 1.0, 1).unwrap();
        let mut r = rng(3);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| mh.sweep(&mut r)));
    }
    group.finish();
}

fn poisson_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson_solve");
    for n in SIZES {
        let g = free_box(n);
        let op = neg_laplacian(&g, 0).unwrap();
        let v = g.vertex_at(0, 0).unwrap();
        let rhs = op.restrict(&Form::indicator(&g, 0, v, 1.0).values);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| b.iter(|| op.solve(black_box(&rhs)).unwrap()));
    }
    group.finish();
}

fn ig_draw(c: &mut Criterion) {
    let mut group = c.benchmark_group("ig_sample");
    for beta in [0.1, 1.0, 10.0] {
        let p = IGParams::new(0.3, beta);
        let mut r = rng(4);
        group.bench_with_input(BenchmarkId::from_parameter(beta), &beta, |b, _| b.iter(|| ig_sample(p, &mut r).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, villain_sweep, iv_sweep, metropolis_sweep, poisson_solve, ig_draw);
criterion_main!(benches);
