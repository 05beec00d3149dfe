use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use dualpath_bench::Fixture;
use dualpath_core::gan::{train_gan, GanTrainConfig, RealFraud};

fn synthesis(c: &mut Criterion) {
    let f = Fixture::build();
    let config = GanTrainConfig {
        generator_steps: 10,
        ..GanTrainConfig::default()
    };
    let real = RealFraud {
        buffer: &[],
        seed_set: &f.fraud,
    };
    let mut group = c.benchmark_group("wgan_gp");
    group.sample_size(10);
    group.bench_function("train_10_generator_steps", |b| {
        b.iter(|| black_box(train_gan(Arc::clone(&f.codec), real, &config, None).unwrap()))
    });
    let (model, _) = train_gan(Arc::clone(&f.codec), real, &config, None).unwrap();
    group.bench_function("synthesize_256", |b| {
        b.iter(|| black_box(model.synthesize(256, 9, 0).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, synthesis);
criterion_main!(benches);
