use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use partcert::oracle::Oracle;
use partcert_bench::{random_logits, random_votes};

fn oracle(c: &mut Criterion) {
    let votes = random_votes(7, 4, 3);
    c.bench_function("oracle/plurality_t7_y4", |b| {
        let o = Oracle::default();
        b.iter(|| o.max_stable_plurality(black_box(&votes)).unwrap())
    });
    let logits = random_logits(5, 3, 4);
    c.bench_function("oracle/runoff_t5_y3", |b| {
        let o = Oracle::default();
        b.iter(|| o.max_stable_runoff(black_box(&logits)).unwrap())
    });
}

criterion_group!(benches, oracle);
criterion_main!(benches);
