use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use srzoo::ir::{forward, init_weights, InitScheme};
use srzoo::tensor::{conv2d, conv2d_reference};
use srzoo::zoo;
use srzoo::Shape;
use srzoo_bench::{body_conv, pattern};

fn conv(c: &mut Criterion) {
    let mut group = c.benchmark_group("conv2d_64x64_3x3");
    group.sample_size(10);
    for size in [16usize, 32] {
        let (p, x, w, b) = body_conv(size);
        group.bench_with_input(BenchmarkId::new("fast", size), &size, |bench, _| {
            bench.iter(|| conv2d(black_box(&x), &p, &w, Some(&b)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("reference", size), &size, |bench, _| {
            bench.iter(|| conv2d_reference(black_box(&x), &p, &w, Some(&b)).unwrap())
        });
    }
    group.finish();
}

fn models(c: &mut Criterion) {
    let mut group = c.benchmark_group("forward_32x32");
    group.sample_size(10);
    let input = pattern(Shape::new(1, 3, 32, 32));
    for id in ["msrresnet", "imdn"] {
        let g = zoo::build_model(id, &[]).unwrap();
        let store = init_weights(&g, 0, InitScheme::KaimingUniform);
        group.bench_function(id, |bench| bench.iter(|| forward(&g, &store, black_box(&input)).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, conv, models);
criterion_main!(benches);
