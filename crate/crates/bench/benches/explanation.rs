use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dualpath_bench::Fixture;
use dualpath_core::shap::{explain_transaction, BackgroundSet, ExplainConfig};

fn explanation(c: &mut Criterion) {
    let f = Fixture::build();
    let flagged = f.flagged();
    let t = flagged.first().unwrap_or(&f.fraud[0]).clone();
    let config = ExplainConfig::default();

    let mut group = c.benchmark_group("explain");
    group.sample_size(20);
    group.bench_function("exact_background_100", |b| {
        b.iter(|| black_box(explain_transaction(f.vae(), &f.snapshot.background, &t, &config).unwrap()))
    });
    let small = BackgroundSet::new(f.vae(), f.snapshot.background.transactions[..20].to_vec()).unwrap();
    group.bench_function("exact_background_20", |b| {
        b.iter(|| black_box(explain_transaction(f.vae(), &small, &t, &config).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, explanation);
criterion_main!(benches);
