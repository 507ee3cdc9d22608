use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use swtf_bench::{drifting_square, tensor};
use swtf_core::net::{conv2d_forward, ConvGeometry};
use swtf_core::swtf::{estimate_flow, swtf_preprocess, FlowParams, SamplingMode};
use swtf_core::FusionConfig;

fn flow(c: &mut Criterion) {
    let mut group = c.benchmark_group("horn_schunck");
    for size in [64usize, 128] {
        let (frames, _) = drifting_square(2, size, size);
        group.bench_with_input(BenchmarkId::from_parameter(size), &frames, |b, f| {
            b.iter(|| estimate_flow(&f[0], &f[1], &FlowParams::default()).unwrap())
        });
    }
    group.finish();
}

fn preprocess(c: &mut Criterion) {
    let mut group = c.benchmark_group("swtf_preprocess");
    group.sample_size(20);
    let config = FusionConfig::default();
    for t in [15usize, 30] {
        let (frames, boxes) = drifting_square(t, 64, 64);
        group.bench_with_input(BenchmarkId::new("T", t), &(frames, boxes), |b, (f, bx)| {
            b.iter(|| swtf_preprocess(f, bx, &config, SamplingMode::Center, 0).unwrap())
        });
    }
    group.finish();
}

fn conv(c: &mut Criterion) {
    let x = tensor(&[30, 3, 64, 64], 1);
    let w = tensor(&[8, 3, 3, 3], 2);
    let b = tensor(&[8], 3);
    c.bench_function("conv2d_forward_30x3x64x64", |bench| {
        bench.iter(|| conv2d_forward(&x, &w, &b, ConvGeometry::default()).unwrap())
    });
}

criterion_group!(benches, flow, preprocess, conv);
criterion_main!(benches);
