//! Real spherical harmonics up to degree 3 (Condon-Shortley phase), with the
//! direction Jacobian needed by the backward pass.

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};

pub const MAX_SH_DEGREE: usize = 3;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// DC offset added after evaluation so a zero coefficient set renders mid-gray.
pub const COLOR_OFFSET: f64 = 0.5;

#[inline]
pub fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Inverse of [`coeff_count`]; errors when `k` is not `(L+1)^2` for `L <= 3`.
pub fn degree_for_count(k: usize) -> Result<usize> {
    (0..=MAX_SH_DEGREE)
        .find(|&d| coeff_count(d) == k)
        .ok_or_else(|| Error::Shape(format!("{k} SH coefficients is not (L+1)^2 for L <= 3")))
}

/// Basis values `Y_lm(dir)` in the usual (l, m) order, `k` of them.
pub fn sh_basis<T: Real>(degree: usize, dir: Vec3<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(coeff_count(degree));
    let c = T::lit;
    out.push(c(C0));
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir;
    out.push(-c(C1) * y);
    out.push(c(C1) * z);
    out.push(-c(C1) * x);
    if degree == 1 {
        return out;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let two = c(2.0);
    out.push(c(C2[0]) * xy);
    out.push(c(C2[1]) * yz);
    out.push(c(C2[2]) * (two * zz - xx - yy));
    out.push(c(C2[3]) * xz);
    out.push(c(C2[4]) * (xx - yy));
    if degree == 2 {
        return out;
    }
    let three = c(3.0);
    let four = c(4.0);
    out.push(c(C3[0]) * y * (three * xx - yy));
    out.push(c(C3[1]) * xy * z);
    out.push(c(C3[2]) * y * (four * zz - xx - yy));
    out.push(c(C3[3]) * z * (two * zz - three * xx - three * yy));
    out.push(c(C3[4]) * x * (four * zz - xx - yy));
    out.push(c(C3[5]) * z * (xx - yy));
    out.push(c(C3[6]) * x * (xx - three * yy));
    out
}

/// Jacobian of [`sh_basis`] with respect to the (unnormalized) direction
/// components: `out[i] = dY_i / d(x, y, z)`.
pub fn sh_basis_grad<T: Real>(degree: usize, dir: Vec3<T>) -> Vec<Vec3<T>> {
    let z0 = T::zero();
    let mut out = Vec::with_capacity(coeff_count(degree));
    let c = T::lit;
    out.push([z0, z0, z0]);
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir;
    let c1 = c(C1);
    out.push([z0, -c1, z0]);
    out.push([z0, z0, c1]);
    out.push([-c1, z0, z0]);
    if degree == 1 {
        return out;
    }
    let two = c(2.0);
    let four = c(4.0);
    out.push([c(C2[0]) * y, c(C2[0]) * x, z0]);
    out.push([z0, c(C2[1]) * z, c(C2[1]) * y]);
    out.push([-two * c(C2[2]) * x, -two * c(C2[2]) * y, four * c(C2[2]) * z]);
    out.push([c(C2[3]) * z, z0, c(C2[3]) * x]);
    out.push([two * c(C2[4]) * x, -two * c(C2[4]) * y, z0]);
    if degree == 2 {
        return out;
    }
    let three = c(3.0);
    let six = c(6.0);
    let eight = c(8.0);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    // y (3xx - yy)
    out.push([c(C3[0]) * six * x * y, c(C3[0]) * (three * xx - three * yy), z0]);
    // xyz
    out.push([c(C3[1]) * y * z, c(C3[1]) * x * z, c(C3[1]) * x * y]);
    // y (4zz - xx - yy)
    out.push([
        c(C3[2]) * (-two * x * y),
        c(C3[2]) * (four * zz - xx - three * yy),
        c(C3[2]) * eight * y * z,
    ]);
    // z (2zz - 3xx - 3yy)
    out.push([
        c(C3[3]) * (-six * x * z),
        c(C3[3]) * (-six * y * z),
        c(C3[3]) * (six * zz - three * xx - three * yy),
    ]);
    // x (4zz - xx - yy)
    out.push([
        c(C3[4]) * (four * zz - three * xx - yy),
        c(C3[4]) * (-two * x * y),
        c(C3[4]) * eight * x * z,
    ]);
    // z (xx - yy)
    out.push([c(C3[5]) * two * x * z, c(C3[5]) * (-two * y * z), c(C3[5]) * (xx - yy)]);
    // x (xx - 3yy)
    out.push([c(C3[6]) * (three * xx - three * yy), c(C3[6]) * (-six * x * y), z0]);
    out
}

/// Linear SH evaluation `sum_i c_i Y_i(dir)`, before offset and clamping.
pub fn eval_sh_raw<T: Real>(coeffs: &[[T; 3]], dir: Vec3<T>) -> Result<[T; 3]> {
    let degree = degree_for_count(coeffs.len())?;
    let basis = sh_basis(degree, dir);
    let mut out = [T::zero(); 3];
    for (b, c) in basis.iter().zip(coeffs) {
        for ch in 0..3 {
            out[ch] += *b * c[ch];
        }
    }
    Ok(out)
}

/// View-dependent color: raw SH value plus the 0.5 offset, clamped at zero.
pub fn eval_sh_color<T: Real>(coeffs: &[[T; 3]], dir: Vec3<T>) -> Result<[T; 3]> {
    let raw = eval_sh_raw(coeffs, dir)?;
    let off = T::lit(COLOR_OFFSET);
    Ok(raw.map(|v| (v + off).max(T::zero())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_only_is_direction_independent() {
        let v = [0.3_f64, -0.2, 0.9];
        for dir in [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, -1.0, 0.0]] {
            let col = eval_sh_color(&[v], dir).unwrap();
            for ch in 0..3 {
                let expect = (0.282_094_8 * v[ch] + 0.5).max(0.0);
                assert!((col[ch] - expect).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn odd_band_is_antisymmetric_in_z() {
        let mut c = vec![[0.0_f64; 3]; 4];
        c[2] = [0.7, -0.4, 0.1];
        let d = [0.3_f64, 0.4, (1.0_f64 - 0.25).sqrt()];
        let dneg = [d[0], d[1], -d[2]];
        let a = eval_sh_color(&c, d).unwrap();
        let b = eval_sh_color(&c, dneg).unwrap();
        for ch in 0..3 {
            assert!(((a[ch] - 0.5) + (b[ch] - 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn wrong_coefficient_count_is_a_shape_error() {
        let c = vec![[0.0_f64; 3]; 5];
        assert!(matches!(eval_sh_color(&c, [0.0, 0.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn basis_gradient_matches_finite_differences() {
        let dir = [0.31_f64, -0.57, 0.76];
        let g = sh_basis_grad(3, dir);
        let h = 1e-6;
        for axis in 0..3 {
            let mut p = dir;
            let mut m = dir;
            p[axis] += h;
            m[axis] -= h;
            let bp = sh_basis(3, p);
            let bm = sh_basis(3, m);
            for i in 0..16 {
                let fd = (bp[i] - bm[i]) / (2.0 * h);
                assert!((fd - g[i][axis]).abs() < 1e-8, "basis {i} axis {axis}");
            }
        }
    }
}
