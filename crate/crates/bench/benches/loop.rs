use criterion::{criterion_group, criterion_main, Criterion};
use hystloop_bench::{dynamic_square, field_sweep, ja_start, static_sine};
use hystloop_core::{plant::ja_step, run_closed_loop};
use std::hint::black_box;

fn closed_loop(c: &mut Criterion) {
    let mut g = c.benchmark_group("closed_loop");
    g.sample_size(10);
    let cfg = static_sine();
    g.bench_function("static_sine", |b| b.iter(|| run_closed_loop(black_box(&cfg)).unwrap()));
    let cfg = dynamic_square();
    g.bench_function("dynamic_square", |b| b.iter(|| run_closed_loop(black_box(&cfg)).unwrap()));
    g.finish();
}

fn ja_period(c: &mut Criterion) {
    let (params, start) = ja_start();
    let sweep = field_sweep(1000, 20.0 * params.a);
    c.bench_function("ja_step/period", |b| {
        b.iter(|| {
            let mut s = start;
            for &h in &sweep {
                s = ja_step(&s, black_box(h), 1e-4, &params).unwrap();
            }
            s
        })
    });
}

criterion_group!(benches, closed_loop, ja_period);
criterion_main!(benches);
