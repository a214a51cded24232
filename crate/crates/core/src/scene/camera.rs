use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Image, Mask};
use crate::math::{
    cross3, mat3_det, mat3_mul, mat3_transpose, mat3_vec, normalize3, scale3, sub3, Mat3, Vec3,
};

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    /// Square-pixel intrinsics for a horizontal field of view, principal
    /// point at the image center.
    pub fn from_fov(width: usize, height: usize, fov_x_radians: f64) -> Self {
        let f = width as f64 / (2.0 * (fov_x_radians / 2.0).tan());
        Self {
            fx: f,
            fy: f,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        }
    }
}

/// A calibrated view. Extrinsics map world to camera (`x_cam = R x + t`),
/// right-handed with +z forward, +x right and +y down in the image.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub id: String,
    pub intrinsics: Intrinsics,
    pub rotation: Mat3<f64>,
    pub translation: Vec3<f64>,
    pub width: usize,
    pub height: usize,
    pub time: f64,
    pub gt_image: Option<Image<f32>>,
    pub gt_depth: Option<Image<f32>>,
    pub mask: Option<Mask>,
}

impl CameraView {
    pub fn new(
        id: impl Into<String>,
        intrinsics: Intrinsics,
        rotation: Mat3<f64>,
        translation: Vec3<f64>,
        width: usize,
        height: usize,
        time: f64,
    ) -> Self {
        Self {
            id: id.into(),
            intrinsics,
            rotation,
            translation,
            width,
            height,
            time,
            gt_image: None,
            gt_depth: None,
            mask: None,
        }
    }

    /// Camera looking from `eye` at `target`; `up` is a world-space hint for
    /// the image's upward direction (-y in camera space).
    pub fn look_at(
        id: impl Into<String>,
        intrinsics: Intrinsics,
        width: usize,
        height: usize,
        eye: Vec3<f64>,
        target: Vec3<f64>,
        up: Vec3<f64>,
        time: f64,
    ) -> Self {
        let rotation = look_at_rotation(eye, target, up);
        let translation = scale3(mat3_vec(&rotation, eye), -1.0);
        Self::new(id, intrinsics, rotation, translation, width, height, time)
    }

    /// Camera center in world coordinates, `-Rᵀ t`.
    pub fn center(&self) -> Vec3<f64> {
        scale3(mat3_vec(&mat3_transpose(&self.rotation), self.translation), -1.0)
    }

    /// Viewing direction (+z camera axis) in world coordinates.
    pub fn forward(&self) -> Vec3<f64> {
        self.rotation[2]
    }

    /// Image-up direction (-y camera axis) in world coordinates.
    pub fn up(&self) -> Vec3<f64> {
        scale3(self.rotation[1], -1.0)
    }

    pub fn world_to_camera(&self, p: Vec3<f64>) -> Vec3<f64> {
        let r = mat3_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// Same camera with a new pose, dropping any ground-truth payloads.
    pub fn with_pose(&self, id: impl Into<String>, rotation: Mat3<f64>, translation: Vec3<f64>) -> Self {
        Self::new(id, self.intrinsics, rotation, translation, self.width, self.height, self.time)
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.rotation;
        let rrt = mat3_mul(r, &mat3_transpose(r));
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                if (rrt[i][j] - e).abs() > 1e-6 {
                    return Err(Error::InvalidInput(format!(
                        "view {}: extrinsic rotation is not orthonormal",
                        self.id
                    )));
                }
            }
        }
        if (mat3_det(r) - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(format!(
                "view {}: extrinsic rotation has det != +1",
                self.id
            )));
        }
        if !(0.0..=1.0).contains(&self.time) {
            return Err(Error::InvalidInput(format!(
                "view {}: time {} outside [0, 1]",
                self.id, self.time
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput(format!("view {}: empty resolution", self.id)));
        }
        let expect = (self.width, self.height);
        let check = |what: &str, w: usize, h: usize| {
            if (w, h) != expect {
                Err(Error::ResolutionMismatch {
                    what: format!("view {} {what}", self.id),
                    expected: expect,
                    found: (w, h),
                })
            } else {
                Ok(())
            }
        };
        if let Some(img) = &self.gt_image {
            check("image", img.width, img.height)?;
        }
        if let Some(d) = &self.gt_depth {
            check("depth", d.width, d.height)?;
        }
        if let Some(m) = &self.mask {
            check("mask", m.width, m.height)?;
        }
        Ok(())
    }
}

pub(crate) fn look_at_rotation(eye: Vec3<f64>, target: Vec3<f64>, up: Vec3<f64>) -> Mat3<f64> {
    let forward = normalize3(sub3(target, eye));
    // x = y × z with y = down ≈ -up, hence right = forward × up.
    let right = normalize3(cross3(forward, up));
    let down = cross3(forward, right);
    [right, down, forward]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_produces_valid_extrinsics() {
        let k = Intrinsics::from_fov(32, 32, 1.0);
        let cam = CameraView::look_at("v", k, 32, 32, [1.0, 2.0, -3.0], [0.0, 0.0, 0.0], [0.0, -1.0, 0.0], 0.5);
        cam.validate().unwrap();
        let c = cam.center();
        for (a, b) in c.iter().zip([1.0, 2.0, -3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = cam.world_to_camera([0.0, 0.0, 0.0]);
        assert!(p[0].abs() < 1e-12 && p[1].abs() < 1e-12 && p[2] > 0.0);
    }

    #[test]
    fn axis_aligned_camera_has_identity_rotation() {
        let k = Intrinsics::from_fov(8, 8, 1.0);
        let cam = CameraView::look_at("v", k, 8, 8, [0.0, 0.0, -2.0], [0.0; 3], [0.0, -1.0, 0.0], 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((cam.rotation[i][j] - e).abs() < 1e-15);
            }
        }
        assert_eq!(cam.up(), [-0.0, -1.0, -0.0]);
    }

    #[test]
    fn bad_time_rejected() {
        let k = Intrinsics::from_fov(8, 8, 1.0);
        let mut cam = CameraView::look_at("v", k, 8, 8, [0.0, 0.0, -2.0], [0.0; 3], [0.0, -1.0, 0.0], 0.0);
        cam.time = 1.5;
        assert!(cam.validate().is_err());
    }
}
