mod common;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tissuesplat_core::scene::sh::{coeff_count, sh_basis};
use tissuesplat_core::scene::{build_covariance, eval_sh_raw, gaussian_density};

/// Associated Legendre `P_l^m(x)`, `m ≥ 0`, with the Condon-Shortley phase.
fn legendre(l: usize, m: usize, x: f64) -> f64 {
    let mut pmm = 1.0;
    let s = (1.0 - x * x).sqrt();
    for i in 0..m {
        pmm *= -((2 * i + 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut out = 0.0;
    for ll in (m + 2)..=l {
        out = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = out;
    }
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Real SH from spherical angles, ordered `m = -l..=l`.
fn real_sh(l: usize, m: i64, dir: [f64; 3]) -> f64 {
    let theta = dir[2].clamp(-1.0, 1.0).acos();
    let phi = dir[1].atan2(dir[0]);
    let am = m.unsigned_abs() as usize;
    let k = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am) / factorial(l + am)).sqrt();
    let p = legendre(l, am, theta.cos());
    match m.cmp(&0) {
        std::cmp::Ordering::Equal => k * p,
        std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).cos(),
        std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * k * p * (am as f64 * phi).sin(),
    }
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    v.map(|x| x / n)
}

#[test]
fn sh_basis_matches_legendre_construction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let d = unit([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        let basis = sh_basis(3, d);
        assert_eq!(basis.len(), coeff_count(3));
        let mut i = 0;
        for l in 0..=3usize {
            for m in -(l as i64)..=(l as i64) {
                let want = real_sh(l, m, d);
                assert!((basis[i] - want).abs() < 1e-12, "l={l} m={m}: {} vs {want}", basis[i]);
                i += 1;
            }
        }
    }
}

fn nalgebra_rotation(q: [f64; 4]) -> Matrix3<f64> {
    UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]))
        .to_rotation_matrix()
        .into_inner()
}

#[test]
fn covariance_eigenvalues_are_squared_scales() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let q = [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0));
        let sigma = build_covariance([3.0, 2.0, 1.0], q).unwrap();
        let m = Matrix3::from_fn(|i, j| sigma[i][j]);
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in ev.iter().zip([9.0, 4.0, 1.0]) {
            assert!((a - b).abs() < 1e-10, "{ev:?}");
        }
        let r = nalgebra_rotation(q);
        let reference = r * Matrix3::from_diagonal(&Vector3::new(9.0, 4.0, 1.0)) * r.transpose();
        for i in 0..3 {
            for j in 0..3 {
                assert!((sigma[i][j] - reference[(i, j)]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn density_integrates_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let scale = [0.7, 0.4, 0.2];
    let q = [0.9, 0.2, -0.3, 0.1];
    let mean = [0.3, -0.2, 1.1];
    let sigma = build_covariance(scale, q).unwrap();
    let r = nalgebra_rotation(q);
    // Uniform samples over a ±4.5σ box in the principal frame.
    let half = scale.map(|s| 4.5 * s);
    let volume: f64 = half.iter().map(|h| 2.0 * h).product();
    let n = 1_000_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let u = Vector3::new(
            rng.random_range(-half[0]..half[0]),
            rng.random_range(-half[1]..half[1]),
            rng.random_range(-half[2]..half[2]),
        );
        let x = r * u;
        sum += gaussian_density([mean[0] + x[0], mean[1] + x[1], mean[2] + x[2]], mean, &sigma).unwrap();
    }
    let integral = volume * sum / n as f64;
    assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
}

#[test]
fn density_is_invariant_under_joint_rotation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let scale = [0.5, 0.3, 0.9];
    let q = [0.8, 0.1, 0.4, -0.2];
    let sigma = build_covariance(scale, q).unwrap();
    let mean = [0.1, 0.2, 0.3];
    for _ in 0..20 {
        let g = [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0));
        let rg = nalgebra_rotation(g);
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let s = Matrix3::from_fn(|i, j| sigma[i][j]);
        let s2 = rg * s * rg.transpose();
        let sigma2 = std::array::from_fn(|i| std::array::from_fn(|j| s2[(i, j)]));
        let m2 = rg * Vector3::from(mean);
        let x2 = rg * Vector3::from(x);
        let a = gaussian_density(x, mean, &sigma).unwrap();
        let b = gaussian_density([x2[0], x2[1], x2[2]], [m2[0], m2[1], m2[2]], &sigma2).unwrap();
        assert!(common::rel_err(a, b, 1e-300) < 1e-10, "{a} vs {b}");
    }
}

fn quat() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0).prop_filter("non-degenerate", |q| q.iter().map(|v| v * v).sum::<f64>() > 1e-2)
}

proptest! {
    #[test]
    fn quaternion_double_cover(q in quat(), s in prop::array::uniform3(0.05f64..2.0), k in 0.1f64..10.0) {
        let a = build_covariance(s, q).unwrap();
        let b = build_covariance(s, q.map(|v| -v)).unwrap();
        let c = build_covariance(s, q.map(|v| k * v)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((a[i][j] - b[i][j]).abs() < 1e-12);
                prop_assert!((a[i][j] - c[i][j]).abs() < 1e-12);
                prop_assert_eq!(a[i][j], a[j][i]);
            }
        }
    }

    #[test]
    fn covariance_is_positive_definite(q in quat(), s in prop::array::uniform3(0.05f64..2.0)) {
        let a = build_covariance(s, q).unwrap();
        let m = Matrix3::from_fn(|i, j| a[i][j]);
        let det = m.determinant();
        let want: f64 = s.iter().map(|v| v * v).product();
        prop_assert!((det - want).abs() <= 1e-9 * want.max(1e-12));
        prop_assert!(m.symmetric_eigen().eigenvalues.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn sh_is_linear_in_coefficients(
        a in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 16),
        b in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 16),
        d in prop::array::uniform3(-1.0f64..1.0).prop_filter("non-zero", |d| d.iter().map(|v| v * v).sum::<f64>() > 1e-3),
        wa in -2.0f64..2.0,
        wb in -2.0f64..2.0,
    ) {
        let d = unit(d);
        let mix: Vec<[f64; 3]> = a.iter().zip(&b).map(|(x, y)| std::array::from_fn(|c| wa * x[c] + wb * y[c])).collect();
        let ra = eval_sh_raw(&a, d).unwrap();
        let rb = eval_sh_raw(&b, d).unwrap();
        let rm = eval_sh_raw(&mix, d).unwrap();
        for c in 0..3 {
            prop_assert!((rm[c] - (wa * ra[c] + wb * rb[c])).abs() < 1e-12);
        }
    }
}
