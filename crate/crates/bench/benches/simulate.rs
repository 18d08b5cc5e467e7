use criterion::{criterion_group, criterion_main, Criterion};
use ktag_bench::workloads;
use ktag_core::protocols::ProtocolSpec;
use ktag_core::sweep::{sweep, InputPlan, SweepConfig};
use ktag_core::{check_all, simulate, Protocol};
use std::hint::black_box;

fn runs(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    for (name, p, s) in workloads() {
        g.bench_function(name, |b| b.iter(|| black_box(simulate(&p, black_box(&s)).unwrap())));
    }
    g.finish();

    let mut g = c.benchmark_group("check_all");
    for (name, p, s) in workloads() {
        let run = simulate(&p, &s).unwrap();
        let task = p.task();
        g.bench_function(name, |b| b.iter(|| black_box(check_all(black_box(&run), &task, &p))));
    }
    g.finish();
}

fn sweeps(c: &mut Criterion) {
    let mut cfg = SweepConfig::new(ProtocolSpec::fig2(3, 1).unwrap());
    cfg.inputs = InputPlan::Random { trials: 200 };
    let mut g = c.benchmark_group("sweep");
    g.sample_size(10);
    g.bench_function("fig2_3_1_200", |b| b.iter(|| black_box(sweep(&cfg))));
    g.finish();
}

criterion_group!(benches, runs, sweeps);
criterion_main!(benches);
