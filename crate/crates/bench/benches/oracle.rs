use criterion::{criterion_group, criterion_main, Criterion};
use ktag_bench::partial_vectors;
use ktag_core::tasks::{oracle_allowed, oracle_allowed_bruteforce};
use ktag_core::ProblemSpec;
use std::hint::black_box;

fn allowed(c: &mut Criterion) {
    let vectors = partial_vectors(5);
    let problem = ProblemSpec::threshold(3, 5).unwrap();
    c.bench_function("oracle_allowed/n5_all", |b| {
        b.iter(|| {
            for w in &vectors {
                black_box(oracle_allowed(&problem, 2, black_box(w)).unwrap());
            }
        })
    });
    c.bench_function("oracle_allowed_bruteforce/n5_all", |b| {
        b.iter(|| {
            for w in &vectors {
                black_box(oracle_allowed_bruteforce(&problem, 2, black_box(w)).unwrap());
            }
        })
    });
}

criterion_group!(benches, allowed);
criterion_main!(benches);
