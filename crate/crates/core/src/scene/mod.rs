//! Explicit Gaussian scene representation and the pinhole camera model.

mod camera;
mod covariance;
pub mod sh;

pub use camera::{CameraView, Intrinsics};
pub use covariance::{build_covariance, covariance_from_rotation, gaussian_density};
pub use sh::{eval_sh_color, eval_sh_raw};

use crate::error::{Error, Result};
use crate::math::{logit, sigmoid, Real, Vec3};

/// One anisotropic Gaussian. Scale is stored as `ln(s)` and opacity as a
/// logit; activations happen at use sites.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive<T> {
    pub position: Vec3<T>,
    /// Quaternion `(w, x, y, z)`; normalized before every use.
    pub rotation: [T; 4],
    pub log_scale: Vec3<T>,
    pub opacity_logit: T,
    /// `(L+1)²` rows of RGB coefficients.
    pub sh: Vec<[T; 3]>,
}

impl<T: Real> GaussianPrimitive<T> {
    pub fn zeroed(sh_count: usize) -> Self {
        Self {
            position: [T::zero(); 3],
            rotation: [T::zero(); 4],
            log_scale: [T::zero(); 3],
            opacity_logit: T::zero(),
            sh: vec![[T::zero(); 3]; sh_count],
        }
    }

    pub fn scale(&self) -> Vec3<T> {
        self.log_scale.map(|s| s.exp())
    }

    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    /// Number of scalars in the flattened parameter block.
    pub fn param_len(sh_count: usize) -> usize {
        3 + 4 + 3 + 1 + 3 * sh_count
    }

    pub fn write_flat(&self, out: &mut Vec<T>) {
        out.extend_from_slice(&self.position);
        out.extend_from_slice(&self.rotation);
        out.extend_from_slice(&self.log_scale);
        out.push(self.opacity_logit);
        for c in &self.sh {
            out.extend_from_slice(c);
        }
    }

    pub fn read_flat(block: &[T], sh_count: usize) -> Self {
        let mut p = Self::zeroed(sh_count);
        p.position.copy_from_slice(&block[0..3]);
        p.rotation.copy_from_slice(&block[3..7]);
        p.log_scale.copy_from_slice(&block[7..10]);
        p.opacity_logit = block[10];
        for (i, c) in p.sh.iter_mut().enumerate() {
            c.copy_from_slice(&block[11 + 3 * i..14 + 3 * i]);
        }
        p
    }

    pub fn cast<U: Real>(&self) -> GaussianPrimitive<U> {
        GaussianPrimitive {
            position: self.position.map(|v| v.cast()),
            rotation: self.rotation.map(|v| v.cast()),
            log_scale: self.log_scale.map(|v| v.cast()),
            opacity_logit: self.opacity_logit.cast(),
            sh: self.sh.iter().map(|c| c.map(|v| v.cast())).collect(),
        }
    }

    /// First attribute that is not finite, if any.
    pub fn non_finite_attribute(&self) -> Option<&'static str> {
        let finite = |s: &[T]| s.iter().all(|v| v.is_finite());
        if !finite(&self.position) {
            Some("position")
        } else if !finite(&self.rotation) {
            Some("rotation")
        } else if !finite(&self.log_scale) {
            Some("log_scale")
        } else if !self.opacity_logit.is_finite() {
            Some("opacity")
        } else if !self.sh.iter().all(|c| finite(c)) {
            Some("sh")
        } else {
            None
        }
    }
}

/// The explicit scene: an ordered list of primitives sharing one SH degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud<T> {
    pub primitives: Vec<GaussianPrimitive<T>>,
    pub sh_degree: usize,
}

impl<T: Real> GaussianCloud<T> {
    pub fn new(sh_degree: usize) -> Self {
        Self {
            primitives: Vec::new(),
            sh_degree,
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn sh_count(&self) -> usize {
        sh::coeff_count(self.sh_degree)
    }

    /// Checks the shared-degree invariant.
    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::Shape(format!(
                "SH degree {} exceeds {}",
                self.sh_degree,
                sh::MAX_SH_DEGREE
            )));
        }
        let k = self.sh_count();
        if let Some(i) = self.primitives.iter().position(|p| p.sh.len() != k) {
            return Err(Error::Shape(format!(
                "primitive {i} has {} SH rows, cloud degree {} needs {k}",
                self.primitives[i].sh.len(),
                self.sh_degree
            )));
        }
        Ok(())
    }

    /// Adds a primitive from activated values (scale, opacity, base color).
    pub fn push_activated(&mut self, position: Vec3<T>, scale: Vec3<T>, rotation: [T; 4], opacity: T, rgb: [T; 3]) {
        let mut sh = vec![[T::zero(); 3]; self.sh_count()];
        let c0 = T::lit(0.282_094_791_773_878_14);
        let off = T::lit(sh::COLOR_OFFSET);
        sh[0] = rgb.map(|v| (v - off) / c0);
        self.primitives.push(GaussianPrimitive {
            position,
            rotation,
            log_scale: scale.map(|s| s.ln()),
            opacity_logit: logit(opacity),
            sh,
        });
    }

    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.len() * GaussianPrimitive::<T>::param_len(self.sh_count()));
        for p in &self.primitives {
            p.write_flat(&mut out);
        }
        out
    }

    pub fn unflatten(flat: &[T], sh_degree: usize) -> Result<Self> {
        let k = sh::coeff_count(sh_degree);
        let block = GaussianPrimitive::<T>::param_len(k);
        if flat.len() % block != 0 {
            return Err(Error::Shape(format!(
                "flat parameter length {} is not a multiple of {block}",
                flat.len()
            )));
        }
        Ok(Self {
            primitives: flat
                .chunks_exact(block)
                .map(|b| GaussianPrimitive::read_flat(b, k))
                .collect(),
            sh_degree,
        })
    }

    pub fn cast<U: Real>(&self) -> GaussianCloud<U> {
        GaussianCloud {
            primitives: self.primitives.iter().map(|p| p.cast()).collect(),
            sh_degree: self.sh_degree,
        }
    }

    /// Zero-valued cloud of the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            primitives: vec![GaussianPrimitive::zeroed(self.sh_count()); self.len()],
            sh_degree: self.sh_degree,
        }
    }

    pub fn centroid(&self) -> Option<Vec3<T>> {
        if self.is_empty() {
            return None;
        }
        let mut acc = [T::zero(); 3];
        for p in &self.primitives {
            for k in 0..3 {
                acc[k] += p.position[k];
            }
        }
        let n = T::lit(self.len() as f64);
        Some(acc.map(|v| v / n))
    }
}

/// Gradients share the primitive layout.
pub type CloudGrads<T> = GaussianCloud<T>;

impl<T: Real> GaussianCloud<T> {
    /// `self += k * other`, elementwise over the parameter layout.
    pub fn add_scaled(&mut self, other: &Self, k: T) {
        for (a, b) in self.primitives.iter_mut().zip(&other.primitives) {
            for i in 0..3 {
                a.position[i] += k * b.position[i];
                a.log_scale[i] += k * b.log_scale[i];
            }
            for i in 0..4 {
                a.rotation[i] += k * b.rotation[i];
            }
            a.opacity_logit += k * b.opacity_logit;
            for (ca, cb) in a.sh.iter_mut().zip(&b.sh) {
                for ch in 0..3 {
                    ca[ch] += k * cb[ch];
                }
            }
        }
    }
}
