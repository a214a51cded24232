use crate::error::{Error, Result};
use crate::math::{mat3_det, mat3_inverse, mat3_mul, mat3_transpose, quat_to_mat, Mat3, Real, Vec3};

/// `Σ = R diag(s)² Rᵀ` with `R` the rotation of the (normalized) quaternion.
pub fn build_covariance<T: Real>(scale: Vec3<T>, rotation: [T; 4]) -> Result<Mat3<T>> {
    if scale.iter().any(|&s| !(s > T::zero())) {
        return Err(Error::InvalidInput(format!(
            "scale must be strictly positive, got {:?}",
            scale
        )));
    }
    let r = quat_to_mat(rotation).ok_or(Error::DegenerateRotation)?;
    Ok(covariance_from_rotation(scale, &r))
}

/// `M Mᵀ` with `M = R diag(s)`; symmetric by construction.
pub fn covariance_from_rotation<T: Real>(scale: Vec3<T>, r: &Mat3<T>) -> Mat3<T> {
    let mut m = *r;
    for row in m.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= scale[j];
        }
    }
    let mut sigma = mat3_mul(&m, &mat3_transpose(&m));
    // Enforce exact symmetry against rounding.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let avg = (sigma[i][j] + sigma[j][i]) * T::lit(0.5);
            sigma[i][j] = avg;
            sigma[j][i] = avg;
        }
    }
    sigma
}

/// Normalized trivariate Gaussian density at `x`.
///
/// A covariance that is singular (or whose determinant underflows) is
/// regularized once by `ε I`, `ε = 1e-8 · trace(Σ) / 3`.
pub fn gaussian_density<T: Real>(x: Vec3<T>, mean: Vec3<T>, sigma: &Mat3<T>) -> Result<T> {
    let (det, inv) = match invert_spd(sigma) {
        Some(ok) => ok,
        None => {
            let trace = sigma[0][0] + sigma[1][1] + sigma[2][2];
            let eps = T::lit(1e-8) * trace / T::lit(3.0);
            let mut reg = *sigma;
            for (i, row) in reg.iter_mut().enumerate() {
                row[i] += eps;
            }
            invert_spd(&reg).ok_or_else(|| {
                Error::NumericalDegeneracy(format!("covariance {sigma:?} is singular"))
            })?
        }
    };
    let d = [x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]];
    let mut maha = T::zero();
    for i in 0..3 {
        for j in 0..3 {
            maha += d[i] * inv[i][j] * d[j];
        }
    }
    let two_pi = T::lit(2.0 * std::f64::consts::PI);
    let norm = T::one() / (two_pi.powf(T::lit(1.5)) * det.sqrt());
    Ok(norm * (T::lit(-0.5) * maha).exp())
}

fn invert_spd<T: Real>(sigma: &Mat3<T>) -> Option<(T, Mat3<T>)> {
    let det = mat3_det(sigma);
    if !(det > T::zero()) || !det.is_normal() {
        return None;
    }
    mat3_inverse(sigma).map(|inv| (det, inv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_inputs_give_identity() {
        let s = build_covariance([1.0_f64, 1.0, 1.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn quarter_turn_about_z_swaps_axes() {
        let h = std::f64::consts::FRAC_PI_4;
        let s = build_covariance([2.0, 1.0, 1.0], [h.cos(), 0.0, 0.0, h.sin()]).unwrap();
        let expect = [[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[i][j] - expect[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert!(matches!(
            build_covariance([1.0_f64, 1.0, 1.0], [0.0; 4]),
            Err(Error::DegenerateRotation)
        ));
    }

    #[test]
    fn density_examples() {
        let id = [[1.0_f64, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let peak = gaussian_density([0.0; 3], [0.0; 3], &id).unwrap();
        assert!((peak - 0.063_493_6).abs() < 1e-7);
        let off = gaussian_density([1.0, 0.0, 0.0], [0.0; 3], &id).unwrap();
        assert!((off - 0.063_493_635_934_240_98 * (-0.5_f64).exp()).abs() < 1e-12);
        assert!((off - 0.038_510_8).abs() < 1e-7);
        let wide = [[4.0_f64, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let half = gaussian_density([0.0; 3], [0.0; 3], &wide).unwrap();
        assert!((half - 0.031_746_8).abs() < 1e-7);
    }

    #[test]
    fn singular_covariance_after_regularization_errors() {
        let zero = [[0.0_f64; 3]; 3];
        assert!(matches!(
            gaussian_density([0.0; 3], [0.0; 3], &zero),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn rank_deficient_covariance_is_regularized() {
        let flat = [[1.0_f64, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]];
        let v = gaussian_density([0.0; 3], [0.0; 3], &flat).unwrap();
        assert!(v.is_finite() && v > 0.0);
    }
}
