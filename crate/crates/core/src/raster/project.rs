use crate::math::{
    mat3_cast, mat3_mul, mat3_transpose, mat3_vec, norm3, quat_to_mat, scale3, sub3, vec3_cast,
    Mat2, Mat3, Real, Vec2, Vec3,
};
use crate::scene::sh::{eval_sh_raw, COLOR_OFFSET};
use crate::scene::{covariance_from_rotation, CameraView, GaussianCloud};

use super::{CUTOFF_SIGMA, LOW_PASS, NEAR_PLANE};

/// Camera parameters converted to the working precision.
#[derive(Debug, Clone, Copy)]
pub struct CameraParams<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
    pub center: Vec3<T>,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> CameraParams<T> {
    pub fn from_view(view: &CameraView) -> Self {
        Self {
            rotation: mat3_cast(&view.rotation),
            translation: vec3_cast(view.translation),
            center: vec3_cast(view.center()),
            fx: T::lit(view.intrinsics.fx),
            fy: T::lit(view.intrinsics.fy),
            cx: T::lit(view.intrinsics.cx),
            cy: T::lit(view.intrinsics.cy),
            width: view.width,
            height: view.height,
        }
    }
}

/// A primitive after projection to the image plane.
#[derive(Debug, Clone)]
pub struct ProjectedGaussian<T> {
    /// Index of the source primitive in the cloud.
    pub index: usize,
    pub mean2d: Vec2<T>,
    /// Screen covariance including the low-pass term.
    pub cov2d: Mat2<T>,
    /// Inverse of `cov2d`.
    pub conic: Mat2<T>,
    /// Camera-space z of the mean.
    pub depth: T,
    pub color: [T; 3],
    /// Activated opacity.
    pub alpha_base: T,
    /// Half extents of the cutoff ellipse's bounding box, in pixels.
    pub extent: Vec2<T>,
    pub(crate) cache: ProjectionCache<T>,
}

/// Quantities reused by the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct ProjectionCache<T> {
    pub cam_mean: Vec3<T>,
    pub unit_quat: [T; 4],
    pub quat_norm: T,
    pub rot: Mat3<T>,
    pub scale: Vec3<T>,
    pub cov_cam: Mat3<T>,
    pub jac: [[T; 3]; 2],
    pub view_dir: Vec3<T>,
    pub view_dist: T,
    /// Per channel: whether the color was clamped at zero.
    pub clamped: [bool; 3],
}

/// EWA projection of every primitive. Primitives at or behind the near plane,
/// with a degenerate rotation, or with non-finite attributes are culled. The
/// result is sorted front to back, ties broken by primitive index.
pub fn project<T: Real>(cloud: &GaussianCloud<T>, view: &CameraView) -> Vec<ProjectedGaussian<T>> {
    let cam = CameraParams::<T>::from_view(view);
    project_with(cloud, &cam)
}

pub(crate) fn project_with<T: Real>(cloud: &GaussianCloud<T>, cam: &CameraParams<T>) -> Vec<ProjectedGaussian<T>> {
    let near = T::lit(NEAR_PLANE);
    let mut out: Vec<ProjectedGaussian<T>> = Vec::with_capacity(cloud.len());
    for (index, prim) in cloud.primitives.iter().enumerate() {
        if prim.non_finite_attribute().is_some() {
            continue;
        }
        let t = add_translation(mat3_vec(&cam.rotation, prim.position), cam.translation);
        if !(t[2] > near) {
            continue;
        }
        let q = prim.rotation;
        let quat_norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let Some(rot) = quat_to_mat(q) else { continue };
        let unit_quat = q.map(|c| c / quat_norm);
        let scale = prim.scale();
        let cov = covariance_from_rotation(scale, &rot);
        let cov_cam = mat3_mul(&mat3_mul(&cam.rotation, &cov), &mat3_transpose(&cam.rotation));

        let (tx, ty, tz) = (t[0], t[1], t[2]);
        let inv_z = T::one() / tz;
        let inv_z2 = inv_z * inv_z;
        let jac = [
            [cam.fx * inv_z, T::zero(), -cam.fx * tx * inv_z2],
            [T::zero(), cam.fy * inv_z, -cam.fy * ty * inv_z2],
        ];
        let mut cov2d = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut acc = T::zero();
                for k in 0..3 {
                    for l in 0..3 {
                        acc += jac[i][k] * cov_cam[k][l] * jac[j][l];
                    }
                }
                cov2d[i][j] = acc;
            }
        }
        let off = (cov2d[0][1] + cov2d[1][0]) * T::lit(0.5);
        cov2d[0][1] = off;
        cov2d[1][0] = off;
        cov2d[0][0] += T::lit(LOW_PASS);
        cov2d[1][1] += T::lit(LOW_PASS);
        let det = cov2d[0][0] * cov2d[1][1] - cov2d[0][1] * cov2d[1][0];
        if !(det > T::zero()) || !det.is_finite() {
            continue;
        }
        let inv_det = T::one() / det;
        let conic = [
            [cov2d[1][1] * inv_det, -cov2d[0][1] * inv_det],
            [-cov2d[1][0] * inv_det, cov2d[0][0] * inv_det],
        ];
        let mean2d = [cam.fx * tx * inv_z + cam.cx, cam.fy * ty * inv_z + cam.cy];
        let k = T::lit(CUTOFF_SIGMA);
        let extent = [k * cov2d[0][0].sqrt(), k * cov2d[1][1].sqrt()];

        let offset_dir = sub3(prim.position, cam.center);
        let view_dist = norm3(offset_dir);
        let view_dir = scale3(offset_dir, T::one() / view_dist);
        let Ok(raw) = eval_sh_raw(&prim.sh, view_dir) else { continue };
        let mut color = [T::zero(); 3];
        let mut clamped = [false; 3];
        for ch in 0..3 {
            let v = raw[ch] + T::lit(COLOR_OFFSET);
            if v < T::zero() {
                clamped[ch] = true;
            } else {
                color[ch] = v;
            }
        }

        out.push(ProjectedGaussian {
            index,
            mean2d,
            cov2d,
            conic,
            depth: tz,
            color,
            alpha_base: prim.opacity(),
            extent,
            cache: ProjectionCache {
                cam_mean: t,
                unit_quat,
                quat_norm,
                rot,
                scale,
                cov_cam,
                jac,
                view_dir,
                view_dist,
                clamped,
            },
        });
    }
    // Stable sort keeps primitive order for equal depths.
    out.sort_by(|a, b| a.depth.partial_cmp(&b.depth).unwrap_or(std::cmp::Ordering::Equal));
    out
}

#[inline]
fn add_translation<T: Real>(a: Vec3<T>, t: Vec3<T>) -> Vec3<T> {
    [a[0] + t[0], a[1] + t[1], a[2] + t[2]]
}

/// Footprint opacity of a projected Gaussian at pixel position `p`: zero
/// outside the cutoff ellipse, otherwise `alpha_base · exp(-½ δᵀ Σ⁻¹ δ)`
/// clamped at [`super::ALPHA_MAX`].
#[inline]
pub fn footprint_alpha<T: Real>(g: &ProjectedGaussian<T>, p: Vec2<T>) -> T {
    footprint(g, p).0
}

/// Returns `(alpha, unclamped alpha, power, clamped)`.
#[inline]
pub(crate) fn footprint<T: Real>(g: &ProjectedGaussian<T>, p: Vec2<T>) -> (T, T, T, bool) {
    let dx = p[0] - g.mean2d[0];
    let dy = p[1] - g.mean2d[1];
    let maha = g.conic[0][0] * dx * dx + T::lit(2.0) * g.conic[0][1] * dx * dy + g.conic[1][1] * dy * dy;
    let cutoff = T::lit(CUTOFF_SIGMA * CUTOFF_SIGMA);
    if !(maha <= cutoff) {
        return (T::zero(), T::zero(), T::zero(), false);
    }
    let power = T::lit(-0.5) * maha;
    let raw = g.alpha_base * power.exp();
    let max = T::lit(super::ALPHA_MAX);
    if raw > max {
        (max, raw, power, true)
    } else {
        (raw, raw, power, false)
    }
}
