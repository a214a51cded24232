use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::math::{Real, Vec3};

/// Plane order inside a level: three spatial, then the spatio-temporal plane
/// sharing no axis with the spatial plane at the same offset.
pub const PLANE_NAMES: [&str; 6] = ["xy", "xz", "yz", "zt", "yt", "xt"];
/// Axes spanned by each plane; axis 3 is time.
const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (2, 3), (1, 3), (0, 3)];

/// One `res × res` grid of `dim`-wide features, stored row-major as
/// `[v][u][feature]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlane<T> {
    pub res: usize,
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeaturePlane<T> {
    pub fn filled(res: usize, dim: usize, value: T) -> Self {
        Self {
            res,
            dim,
            data: vec![value; res * res * dim],
        }
    }

    #[inline]
    fn offset(&self, u: usize, v: usize) -> usize {
        (v * self.res + u) * self.dim
    }

    /// Bilinear corner weights for normalized coordinates in `[0, 1]`:
    /// `[(grid offset, weight); 4]` plus `d weight / d u` and `d weight / d v`.
    fn corners(&self, u: T, v: T) -> ([(usize, T); 4], [T; 4], [T; 4]) {
        let n1 = T::lit((self.res - 1) as f64);
        let (gu, gv) = (u * n1, v * n1);
        let max_cell = (self.res.max(2) - 2) as f64;
        let iu = gu.floor().as_f64().clamp(0.0, max_cell) as usize;
        let iv = gv.floor().as_f64().clamp(0.0, max_cell) as usize;
        let fu = gu - T::lit(iu as f64);
        let fv = gv - T::lit(iv as f64);
        let one = T::one();
        let (iu1, iv1) = ((iu + 1).min(self.res - 1), (iv + 1).min(self.res - 1));
        let w = [
            (self.offset(iu, iv), (one - fu) * (one - fv)),
            (self.offset(iu1, iv), fu * (one - fv)),
            (self.offset(iu, iv1), (one - fu) * fv),
            (self.offset(iu1, iv1), fu * fv),
        ];
        let du = [-(one - fv) * n1, (one - fv) * n1, -fv * n1, fv * n1];
        let dv = [-(one - fu) * n1, -fu * n1, (one - fu) * n1, fu * n1];
        (w, du, dv)
    }

    /// Bilinear sample at normalized `(u, v)`.
    pub fn sample(&self, u: T, v: T) -> Vec<T> {
        let (w, _, _) = self.corners(u, v);
        let mut out = vec![T::zero(); self.dim];
        for (off, wt) in w {
            for (o, &x) in out.iter_mut().zip(&self.data[off..off + self.dim]) {
                *o += wt * x;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingConfig {
    /// Plane resolution per level.
    pub resolutions: Vec<usize>,
    /// Feature width per level.
    pub feature_dim: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![32, 64],
            feature_dim: 16,
        }
    }
}

/// Plane-decomposed 4D feature grid over `(x, y, z, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingField<T> {
    pub levels: Vec<[FeaturePlane<T>; 6]>,
    pub feature_dim: usize,
    pub bounds_min: Vec3<f64>,
    pub bounds_max: Vec3<f64>,
}

impl<T: Real> EncodingField<T> {
    /// Spatial planes drawn uniformly from `[0.1, 0.5]`, spatio-temporal
    /// planes set to one so the initial encoding is time-invariant.
    pub fn new(config: &EncodingConfig, bounds_min: Vec3<f64>, bounds_max: Vec3<f64>, rng: &mut impl Rng) -> Result<Self> {
        if config.resolutions.is_empty() || config.resolutions.iter().any(|&r| r < 2) || config.feature_dim == 0 {
            return Err(Error::InvalidConfig(
                "encoding needs at least one level, resolutions >= 2 and a positive feature width".into(),
            ));
        }
        let dist = Uniform::new(0.1, 0.5).expect("valid range");
        let levels = config
            .resolutions
            .iter()
            .map(|&res| {
                std::array::from_fn(|p| {
                    let mut plane = FeaturePlane::filled(res, config.feature_dim, T::one());
                    if p < 3 {
                        for v in plane.data.iter_mut() {
                            *v = T::lit(dist.sample(rng));
                        }
                    }
                    plane
                })
            })
            .collect();
        let field = Self {
            levels,
            feature_dim: config.feature_dim,
            bounds_min,
            bounds_max,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        for a in 0..3 {
            if !(self.bounds_min[a] < self.bounds_max[a]) {
                return Err(Error::InvalidConfig(format!(
                    "encoding bounds not ordered on axis {a}: {} >= {}",
                    self.bounds_min[a], self.bounds_max[a]
                )));
            }
        }
        for level in &self.levels {
            for plane in level {
                if plane.dim != self.feature_dim {
                    return Err(Error::Shape("feature planes disagree on width".into()));
                }
                if plane.data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericalDegeneracy("non-finite encoding feature".into()));
                }
            }
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.levels.len() * self.feature_dim
    }

    /// `[x, y, z, τ]` mapped into `[0, 1]` (clamped) plus, per axis, whether
    /// the coordinate lies strictly inside the bounds.
    fn normalized(&self, mu: Vec3<T>, tau: T) -> ([T; 4], [bool; 4]) {
        let mut c = [T::zero(); 4];
        let mut inside = [false; 4];
        for a in 0..3 {
            let lo = T::lit(self.bounds_min[a]);
            let span = T::lit(self.bounds_max[a] - self.bounds_min[a]);
            let u = (mu[a] - lo) / span;
            inside[a] = u > T::zero() && u < T::one();
            c[a] = u.max(T::zero()).min(T::one());
        }
        inside[3] = tau > T::zero() && tau < T::one();
        c[3] = tau.max(T::zero()).min(T::one());
        (c, inside)
    }

    /// Per level: `xy⊙zt + xz⊙yt + yz⊙xt`, levels concatenated.
    pub fn encode(&self, mu: Vec3<T>, tau: T) -> Vec<T> {
        let (c, _) = self.normalized(mu, tau);
        let h = self.feature_dim;
        let mut out = vec![T::zero(); self.output_dim()];
        for (l, level) in self.levels.iter().enumerate() {
            let f: Vec<Vec<T>> = (0..6)
                .map(|p| {
                    let (a, b) = PLANE_AXES[p];
                    level[p].sample(c[a], c[b])
                })
                .collect();
            for k in 0..h {
                out[l * h + k] = f[0][k] * f[3][k] + f[1][k] * f[4][k] + f[2][k] * f[5][k];
            }
        }
        out
    }

    /// Accumulates `dL/dfeatures` into `grads` (same shape as `self`) and
    /// returns `dL/dμ`. Coordinates clamped at the bounds get no μ gradient.
    pub fn encode_backward(&self, mu: Vec3<T>, tau: T, g_out: &[T], grads: &mut Self) -> Vec3<T> {
        let (c, inside) = self.normalized(mu, tau);
        let h = self.feature_dim;
        let mut g_coord = [T::zero(); 4];
        for (l, level) in self.levels.iter().enumerate() {
            let g = &g_out[l * h..(l + 1) * h];
            let samples: Vec<_> = (0..6)
                .map(|p| {
                    let (a, b) = PLANE_AXES[p];
                    let (w, du, dv) = level[p].corners(c[a], c[b]);
                    let mut val = vec![T::zero(); h];
                    for (off, wt) in w {
                        for k in 0..h {
                            val[k] += wt * level[p].data[off + k];
                        }
                    }
                    (w, du, dv, val)
                })
                .collect();
            for p in 0..6 {
                let partner = (p + 3) % 6;
                let (a, b) = PLANE_AXES[p];
                let (w, du, dv, _) = &samples[p];
                let other = &samples[partner].3;
                // dL/d(sample_p)[k] = g[k] * other[k]
                let gp: Vec<T> = (0..h).map(|k| g[k] * other[k]).collect();
                let plane_grad = &mut grads.levels[l][p].data;
                for (ci, &(off, wt)) in w.iter().enumerate() {
                    let mut dot = T::zero();
                    for k in 0..h {
                        plane_grad[off + k] += wt * gp[k];
                        dot += level[p].data[off + k] * gp[k];
                    }
                    g_coord[a] += du[ci] * dot;
                    g_coord[b] += dv[ci] * dot;
                }
            }
        }
        let mut g_mu = [T::zero(); 3];
        for a in 0..3 {
            if inside[a] {
                g_mu[a] = g_coord[a] / T::lit(self.bounds_max[a] - self.bounds_min[a]);
            }
        }
        g_mu
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for level in z.levels.iter_mut() {
            for plane in level.iter_mut() {
                plane.data.iter_mut().for_each(|v| *v = T::zero());
            }
        }
        z
    }

    pub fn param_count(&self) -> usize {
        self.levels.iter().flat_map(|l| l.iter()).map(|p| p.data.len()).sum()
    }

    pub fn planes(&self) -> impl Iterator<Item = &FeaturePlane<T>> {
        self.levels.iter().flat_map(|l| l.iter())
    }

    pub fn planes_mut(&mut self) -> impl Iterator<Item = &mut FeaturePlane<T>> {
        self.levels.iter_mut().flat_map(|l| l.iter_mut())
    }
}
