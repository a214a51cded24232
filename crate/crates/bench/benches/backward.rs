use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tissuesplat_bench::{scene, view};
use tissuesplat_core::{render, render_backward, Image, RenderGrads};

fn backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("backward");
    group.sample_size(10);
    let v = view(256);
    for n in [1_000, 10_000] {
        let cloud = scene(n, 2);
        let out = render(&cloud, &v).unwrap();
        let grads = RenderGrads {
            color: Some(Image::from_vec(256, 256, 3, vec![1e-3; 256 * 256 * 3]).unwrap()),
            depth: Some(Image::from_vec(256, 256, 1, vec![1e-3; 256 * 256]).unwrap()),
            accum: None,
        };
        group.bench_with_input(BenchmarkId::from_parameter(n), &cloud, |b, cloud| {
            b.iter(|| render_backward(&out, cloud, &grads).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, backward);
criterion_main!(benches);
