use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use pfdelay_core::scenario::{preset, run, write_csv};

fn preset_runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("run");
    for name in ["delay_reg", "c_track", "t_bar_sweep"] {
        for f in preset(name).unwrap().scenarios {
            let s = f.resolve().unwrap();
            g.bench_with_input(BenchmarkId::from_parameter(&s.name), &s, |b, s| b.iter(|| run(black_box(s)).unwrap()));
        }
    }
    g.finish();
}

fn csv_output(c: &mut Criterion) {
    let s = preset("t_bar_sweep").unwrap().scenarios.pop().unwrap().resolve().unwrap();
    let rows = run(&s).unwrap().rows;
    c.bench_function("write_csv/t_bar_sweep_n25", |b| {
        b.iter(|| {
            let mut buf = Vec::with_capacity(1 << 20);
            write_csv(black_box(&rows), &mut buf).unwrap();
            buf
        })
    });
}

criterion_group!(benches, preset_runs, csv_output);
criterion_main!(benches);
