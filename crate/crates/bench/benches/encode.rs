use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tissuesplat_bench::scene;
use tissuesplat_core::deform::{apply_deformation, DeformationField};
use tissuesplat_core::train::TrainConfig;

fn encode(c: &mut Criterion) {
    let config = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let field = DeformationField::<f32>::new(&config.deformation(), [-1.5; 3], [1.5; 3], &mut rng).unwrap();
    let cloud = scene(10_000, 3);
    let mut group = c.benchmark_group("deformation");
    group.sample_size(10);
    group.bench_function("encode_10k", |b| {
        b.iter(|| {
            cloud
                .primitives
                .iter()
                .map(|p| field.encoding.encode(p.position, 0.5)[0])
                .sum::<f32>()
        })
    });
    group.bench_function("deform_10k", |b| b.iter(|| apply_deformation(&cloud, &field, 0.5)));
    group.finish();
}

criterion_group!(benches, encode);
criterion_main!(benches);
