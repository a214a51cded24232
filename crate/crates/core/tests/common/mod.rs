#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, UnitQuaternion, Vector2, Vector3};
use tissuesplat_core::scene::{eval_sh_raw, CameraView, GaussianCloud, GaussianPrimitive, Intrinsics};

/// Camera at (0, 0, -4) looking down +z with image-up along world -y.
pub fn front_camera(width: usize, height: usize) -> CameraView {
    let k = Intrinsics::from_fov(width, height, 0.9);
    CameraView::look_at("cam", k, width, height, [0.0, 0.0, -4.0], [0.0; 3], [0.0, -1.0, 0.0], 0.0)
}

/// Random cloud in front of [`front_camera`]: positions in a slab around the
/// origin, moderate opacities, non-unit quaternions, random SH.
pub fn random_cloud(seed: u64, n: usize, sh_degree: usize) -> GaussianCloud<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cloud = GaussianCloud::new(sh_degree);
    let k = (sh_degree + 1) * (sh_degree + 1);
    for _ in 0..n {
        let mut p = GaussianPrimitive::zeroed(k);
        p.position = [rng.random_range(-1.2..1.2), rng.random_range(-1.2..1.2), rng.random_range(-1.0..1.0)];
        let scale: f64 = rng.random_range(0.15..0.45);
        p.log_scale = [0, 1, 2].map(|_| (scale * rng.random_range(0.6..1.4)).ln());
        let q = [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0));
        p.rotation = [q[0] + 1.5, q[1], q[2], q[3]];
        p.opacity_logit = rng.random_range(-1.5..1.0);
        for row in p.sh.iter_mut() {
            *row = [0, 1, 2].map(|_| rng.random_range(-0.4..0.4));
        }
        p.sh[0] = [0, 1, 2].map(|_| rng.random_range(-0.5..1.0));
        cloud.primitives.push(p);
    }
    cloud
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central difference of `f` with respect to every coordinate of `x`.
pub fn central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let fp = f(&x);
            x[i] = orig - h;
            let fm = f(&x);
            x[i] = orig;
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Central difference that keeps each stencil inside one smooth piece: `f`
/// returns `(value, structure signature)` and the step is shrunk until both
/// stencil points share the base point's signature.
pub fn guarded_central_diff(x: &[f64], h: f64, f: impl Fn(&[f64]) -> (f64, u64)) -> Vec<f64> {
    let base = f(x).1;
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            let mut step = h;
            loop {
                x[i] = orig + step;
                let (fp, sp) = f(&x);
                x[i] = orig - step;
                let (fm, sm) = f(&x);
                x[i] = orig;
                if (sp == base && sm == base) || step < h * 1e-4 {
                    break (fp - fm) / (2.0 * step);
                }
                step *= 0.25;
            }
        })
        .collect()
}

/// Per-pixel brute force: every primitive projected with nalgebra, sorted by
/// camera depth, composited without tiling or early termination.
pub fn brute_force(cloud: &GaussianCloud<f64>, view: &CameraView) -> (Vec<[f64; 3]>, Vec<f64>, Vec<f64>) {
    let w = Matrix3::from_fn(|i, j| view.rotation[i][j]);
    let t = Vector3::from(view.translation);
    let center = -w.transpose() * t;
    let k = &view.intrinsics;
    struct Splat {
        mean: Vector2<f64>,
        conic: Matrix2<f64>,
        opacity: f64,
        color: [f64; 3],
        depth: f64,
    }
    let mut splats: Vec<(f64, usize, Splat)> = Vec::new();
    for (i, p) in cloud.primitives.iter().enumerate() {
        let x = Vector3::from(p.position);
        let c = w * x + t;
        if c.z <= 0.01 {
            continue;
        }
        let q = UnitQuaternion::from_quaternion(Quaternion::new(p.rotation[0], p.rotation[1], p.rotation[2], p.rotation[3]));
        let r = q.to_rotation_matrix().into_inner();
        let s = Matrix3::from_diagonal(&Vector3::from(p.log_scale.map(f64::exp)));
        let sigma = r * s * s * r.transpose();
        let j = Matrix2x3::new(
            k.fx / c.z,
            0.0,
            -k.fx * c.x / (c.z * c.z),
            0.0,
            k.fy / c.z,
            -k.fy * c.y / (c.z * c.z),
        );
        let cov = j * w * sigma * w.transpose() * j.transpose() + Matrix2::identity() * 0.3;
        let dir = (x - center).normalize();
        let raw = eval_sh_raw(&p.sh, [dir.x, dir.y, dir.z]).unwrap();
        splats.push((
            c.z,
            i,
            Splat {
                mean: Vector2::new(k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy),
                conic: cov.try_inverse().unwrap(),
                opacity: 1.0 / (1.0 + (-p.opacity_logit).exp()),
                color: raw.map(|v| (v + 0.5).max(0.0)),
                depth: c.z,
            },
        ));
    }
    splats.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = view.width * view.height;
    let (mut color, mut depth, mut accum) = (vec![[0.0; 3]; n], vec![0.0; n], vec![0.0; n]);
    for y in 0..view.height {
        for x in 0..view.width {
            let pix = y * view.width + x;
            let mut trans = 1.0;
            for (_, _, g) in &splats {
                let d = Vector2::new(x as f64, y as f64) - g.mean;
                let maha = (d.transpose() * g.conic * d)[(0, 0)];
                if maha > 9.0 {
                    continue;
                }
                let alpha = (g.opacity * (-0.5 * maha).exp()).min(0.99);
                for ch in 0..3 {
                    color[pix][ch] += g.color[ch] * alpha * trans;
                }
                depth[pix] += g.depth * alpha * trans;
                accum[pix] += alpha * trans;
                trans *= 1.0 - alpha;
            }
        }
    }
    (color, depth, accum)
}
