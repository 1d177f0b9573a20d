use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pfdelay_bench::{mixed_instance, SIZES};
use pfdelay_core::pf_solver::{
    brute_force_oracle, controller_equilibrium, solve_fixed_point, solve_offline_iteration, verify_kkt,
};

fn fixed_point(c: &mut Criterion) {
    let mut g = c.benchmark_group("solve_fixed_point");
    for n in SIZES {
        let (cfg, q) = mixed_instance(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| solve_fixed_point(black_box(&cfg), black_box(&q)).unwrap())
        });
    }
    g.finish();
}

fn equilibrium(c: &mut Criterion) {
    let mut g = c.benchmark_group("controller_equilibrium");
    for n in SIZES {
        let (cfg, q) = mixed_instance(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| controller_equilibrium(black_box(&cfg), black_box(&q)).unwrap())
        });
    }
    g.finish();
}

fn kkt(c: &mut Criterion) {
    let (cfg, q) = mixed_instance(25);
    let sol = solve_fixed_point(&cfg, &q).unwrap();
    c.bench_function("verify_kkt/25", |b| b.iter(|| verify_kkt(black_box(&sol), &cfg, &q).unwrap()));
}

fn oracle(c: &mut Criterion) {
    let mut g = c.benchmark_group("brute_force_oracle");
    g.sample_size(20);
    for n in [1, 2, 3] {
        let (cfg, q) = mixed_instance(n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| brute_force_oracle(black_box(&cfg), black_box(&q), 20).unwrap())
        });
    }
    g.finish();
}

fn offline(c: &mut Criterion) {
    let (cfg, q) = mixed_instance(10);
    let z0 = vec![1.0; cfg.n()];
    c.bench_function("offline_iteration/10", |b| {
        b.iter(|| solve_offline_iteration(black_box(&cfg), &q, 0.5, 0.2, &z0, 1.0, 5000).unwrap())
    });
}

criterion_group!(benches, fixed_point, equilibrium, kkt, oracle, offline);
criterion_main!(benches);
