//! Shared fixtures for the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tissuesplat_core::{CameraView, GaussianCloud, GaussianPrimitive, Intrinsics};

/// `n` small Gaussians with degree-3 SH scattered over a tissue-sized slab.
pub fn scene(n: usize, seed: u64) -> GaussianCloud<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::new(3);
    for _ in 0..n {
        let mut p = GaussianPrimitive::zeroed(16);
        p.position = [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-0.3..0.3)];
        p.log_scale = [0, 1, 2].map(|_| rng.random_range(0.01f32..0.05).ln());
        p.rotation = [1.0, rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        p.opacity_logit = rng.random_range(-1.0..3.0);
        for row in p.sh.iter_mut() {
            *row = [0, 1, 2].map(|_| rng.random_range(-0.2..0.2));
        }
        cloud.primitives.push(p);
    }
    cloud
}

/// Square view three units in front of the slab.
pub fn view(size: usize) -> CameraView {
    CameraView::look_at(
        "bench",
        Intrinsics::from_fov(size, size, 0.8),
        size,
        size,
        [0.0, 0.0, -3.0],
        [0.0; 3],
        [0.0, -1.0, 0.0],
        0.5,
    )
}
