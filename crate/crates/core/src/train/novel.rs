use rand::Rng;

use crate::math::{
    add3, cross3, mat3_inverse, mat3_vec, norm3, normalize3, rotate_about_axis, scale3, sub3, Mat3, Vec3,
};
use crate::scene::CameraView;

/// Least-squares intersection of the views' optical axes; `None` when the
/// axes are (nearly) parallel or there are fewer than two views.
pub fn estimate_centroid(views: &[CameraView]) -> Option<Vec3<f64>> {
    if views.len() < 2 {
        return None;
    }
    let mut a: Mat3<f64> = [[0.0; 3]; 3];
    let mut b = [0.0; 3];
    for v in views {
        let f = v.forward();
        let c = v.center();
        let mut p: Mat3<f64> = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                p[i][j] = if i == j { 1.0 } else { 0.0 } - f[i] * f[j];
                a[i][j] += p[i][j];
            }
        }
        let pc = mat3_vec(&p, c);
        b = add3(b, pc);
    }
    // Reject near-singular systems (parallel axes).
    let det = crate::math::mat3_det(&a);
    if !(det.abs() > 1e-6 * views.len().pow(3) as f64) {
        return None;
    }
    let x = mat3_vec(&mat3_inverse(&a)?, b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Normalized mean image-up direction of the views.
pub fn mean_up(views: &[CameraView]) -> Vec3<f64> {
    let sum = views.iter().fold([0.0; 3], |acc, v| add3(acc, v.up()));
    if norm3(sum) > 0.0 {
        normalize3(sum)
    } else {
        views[0].up()
    }
}

/// Rotates `source` rigidly by `angle` about the axis through `centroid`
/// along `axis`, then re-aims it at `centroid`. A zero angle returns the
/// source pose unchanged. The result keeps the source's time and mask and
/// carries no ground truth.
pub fn orbit_view(source: &CameraView, centroid: Vec3<f64>, axis: Vec3<f64>, angle: f64, id: impl Into<String>) -> CameraView {
    let id = id.into();
    let mut out = source.with_pose(id.clone(), source.rotation, source.translation);
    out.mask = source.mask.clone();
    if angle == 0.0 {
        return out;
    }
    let axis = normalize3(axis);
    let center = add3(centroid, rotate_about_axis(sub3(source.center(), centroid), axis, angle));
    let up = rotate_about_axis(source.up(), axis, angle);
    let forward = sub3(centroid, center);
    let looked = if norm3(cross3(normalize3(forward), up)) > 1e-9 {
        CameraView::look_at(id, source.intrinsics, source.width, source.height, center, centroid, up, source.time)
    } else {
        // Looking along the up hint; keep the rigidly rotated orientation.
        let r = crate::math::axis_angle_matrix(axis, -angle);
        let rot = crate::math::mat3_mul(&source.rotation, &r);
        let t = scale3(mat3_vec(&rot, center), -1.0);
        CameraView::new(id, source.intrinsics, rot, t, source.width, source.height, source.time)
    };
    out.rotation = looked.rotation;
    out.translation = looked.translation;
    out
}

/// Picks a training view uniformly and orbits it about the mean up axis
/// through `centroid` by an angle uniform in `±range_deg`.
pub fn sample_novel_view(views: &[CameraView], centroid: Vec3<f64>, rng: &mut impl Rng, range_deg: f64) -> CameraView {
    assert!(!views.is_empty(), "novel views need at least one training view");
    let source = &views[rng.random_range(0..views.len())];
    let angle = if range_deg > 0.0 {
        rng.random_range(-range_deg..=range_deg).to_radians()
    } else {
        0.0
    };
    orbit_view(source, centroid, mean_up(views), angle, format!("{}~novel", source.id))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring(n: usize) -> Vec<CameraView> {
        let k = Intrinsics::from_fov(16, 16, 0.8);
        (0..n)
            .map(|i| {
                let a = i as f64 * 0.3 - 0.3;
                let eye = [3.0 * a.sin(), 0.4, -3.0 * a.cos()];
                CameraView::look_at(format!("v{i}"), k, 16, 16, eye, [0.1, 0.0, 0.2], [0.0, -1.0, 0.0], 0.0)
            })
            .collect()
    }

    #[test]
    fn centroid_is_axis_intersection() {
        let c = estimate_centroid(&ring(3)).unwrap();
        for (a, b) in c.iter().zip([0.1, 0.0, 0.2]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(estimate_centroid(&ring(1)).is_none());
    }

    #[test]
    fn zero_range_returns_source_pose() {
        let views = ring(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let v = sample_novel_view(&views, [0.1, 0.0, 0.2], &mut rng, 0.0);
        let src = views.iter().find(|s| v.id.starts_with(&s.id)).unwrap();
        assert_eq!(v.rotation, src.rotation);
        assert_eq!(v.translation, src.translation);
    }

    #[test]
    fn orbit_preserves_distance_and_aims_at_centroid() {
        let views = ring(3);
        let c = [0.1, 0.0, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let v = sample_novel_view(&views, c, &mut rng, 5.0);
            v.validate().unwrap();
            let d: Vec<f64> = views.iter().map(|s| norm3(sub3(s.center(), c))).collect();
            assert!(d.iter().any(|&x| (x - norm3(sub3(v.center(), c))).abs() < 1e-9));
            let p = v.world_to_camera(c);
            assert!(p[0].abs() < 1e-9 && p[1].abs() < 1e-9);
        }
    }

    #[test]
    fn half_turn_about_z_moves_plus_x_to_minus_x() {
        let k = Intrinsics::from_fov(16, 16, 0.8);
        let cam = CameraView::look_at("x", k, 16, 16, [2.0, 0.0, 0.0], [0.0; 3], [0.0, 0.0, 1.0], 0.0);
        let v = orbit_view(&cam, [0.0; 3], [0.0, 0.0, 1.0], std::f64::consts::PI, "y");
        let c = v.center();
        assert!((c[0] + 2.0).abs() < 1e-12 && c[1].abs() < 1e-12 && c[2].abs() < 1e-12);
    }
}
