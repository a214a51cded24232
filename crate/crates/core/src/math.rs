//! Scalar abstraction and the small fixed-size linear algebra used by the
//! renderer. Everything is written against [`Real`] so the same code path runs
//! in 32-bit (training) and 64-bit (reference / gradient checking) precision.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Default
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal fits the scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn cast<U: Real>(self) -> U {
        U::lit(self.as_f64())
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Vec2<T> = [T; 2];
pub type Vec3<T> = [T; 3];
pub type Mat2<T> = [[T; 2]; 2];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

#[inline]
pub fn add3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: Vec3<T>, k: T) -> Vec3<T> {
    [a[0] * k, a[1] * k, a[2] * k]
}

#[inline]
pub fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn norm3<T: Real>(a: Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

pub fn normalize3<T: Real>(a: Vec3<T>) -> Vec3<T> {
    let n = norm3(a);
    scale3(a, T::one() / n)
}

pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat3_zero<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

pub fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat3_transpose<T: Real>(a: &Mat3<T>) -> Mat3<T> {
    let mut out = mat3_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

pub fn mat3_add<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn mat3_vec<T: Real>(a: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [dot3(a[0], v), dot3(a[1], v), dot3(a[2], v)]
}

pub fn mat3_det<T: Real>(a: &Mat3<T>) -> T {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Inverse via the adjugate; `None` when the determinant is zero or not finite.
pub fn mat3_inverse<T: Real>(a: &Mat3<T>) -> Option<Mat3<T>> {
    let det = mat3_det(a);
    if det == T::zero() || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    let mut out = mat3_zero();
    out[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) * inv;
    out[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) * inv;
    out[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) * inv;
    out[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) * inv;
    out[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) * inv;
    out[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) * inv;
    out[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) * inv;
    out[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) * inv;
    out[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) * inv;
    Some(out)
}

pub fn mat3_cast<T: Real, U: Real>(a: &Mat3<T>) -> Mat3<U> {
    a.map(|row| row.map(|x| x.cast()))
}

pub fn vec3_cast<T: Real, U: Real>(a: Vec3<T>) -> Vec3<U> {
    a.map(|x| x.cast())
}

/// Rotation matrix of a quaternion `(w, x, y, z)`, normalized internally.
/// Returns `None` for a zero-norm quaternion.
pub fn quat_to_mat<T: Real>(q: [T; 4]) -> Option<Mat3<T>> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n == T::zero() || !n.is_finite() {
        return None;
    }
    let [w, x, y, z] = q.map(|c| c / n);
    Some(unit_quat_to_mat([w, x, y, z]))
}

pub fn unit_quat_to_mat<T: Real>(q: [T; 4]) -> Mat3<T> {
    let [w, x, y, z] = q;
    let two = T::lit(2.0);
    let one = T::one();
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

/// Given `dL/dR` for `R = unit_quat_to_mat(q)`, returns `dL/dq` for the unit
/// quaternion `q`.
pub fn unit_quat_to_mat_backward<T: Real>(q: [T; 4], g: &Mat3<T>) -> [T; 4] {
    let [w, x, y, z] = q;
    let two = T::lit(2.0);
    let gw = two
        * (x * (g[2][1] - g[1][2]) + y * (g[0][2] - g[2][0]) + z * (g[1][0] - g[0][1]));
    let gx = two
        * (-two * x * (g[1][1] + g[2][2])
            + y * (g[0][1] + g[1][0])
            + z * (g[0][2] + g[2][0])
            + w * (g[2][1] - g[1][2]));
    let gy = two
        * (x * (g[0][1] + g[1][0]) - two * y * (g[0][0] + g[2][2])
            + z * (g[1][2] + g[2][1])
            + w * (g[0][2] - g[2][0]));
    let gz = two
        * (x * (g[0][2] + g[2][0]) + y * (g[1][2] + g[2][1]) - two * z * (g[0][0] + g[1][1])
            + w * (g[1][0] - g[0][1]));
    [gw, gx, gy, gz]
}

/// Backward of `q / |q|`: projects the upstream gradient onto the tangent
/// space of the unit sphere and rescales by `1/|q|`.
pub fn normalize_backward<const N: usize, T: Real>(q: [T; N], g: [T; N]) -> [T; N] {
    let n = q.iter().fold(T::zero(), |acc, &c| acc + c * c).sqrt();
    let inv = T::one() / n;
    let unit = q.map(|c| c * inv);
    let proj = unit
        .iter()
        .zip(g.iter())
        .fold(T::zero(), |acc, (&u, &gi)| acc + u * gi);
    let mut out = [T::zero(); N];
    for i in 0..N {
        out[i] = (g[i] - unit[i] * proj) * inv;
    }
    out
}

/// Rodrigues rotation of `v` about the unit `axis` by `angle` radians.
pub fn rotate_about_axis<T: Real>(v: Vec3<T>, axis: Vec3<T>, angle: T) -> Vec3<T> {
    let (s, c) = angle.sin_cos();
    let term1 = scale3(v, c);
    let term2 = scale3(cross3(axis, v), s);
    let term3 = scale3(axis, dot3(axis, v) * (T::one() - c));
    add3(add3(term1, term2), term3)
}

/// Rotation matrix of the Rodrigues rotation about a unit axis.
pub fn axis_angle_matrix<T: Real>(axis: Vec3<T>, angle: T) -> Mat3<T> {
    let (s, c) = angle.sin_cos();
    let t = T::one() - c;
    let [x, y, z] = axis;
    [
        [c + x * x * t, x * y * t - z * s, x * z * t + y * s],
        [y * x * t + z * s, c + y * y * t, y * z * t - x * s],
        [z * x * t - y * s, z * y * t + x * s, c + z * z * t],
    ]
}
