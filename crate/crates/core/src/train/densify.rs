use rand::Rng;
use rand_distr::StandardNormal;

use crate::math::{quat_to_mat, Real};
use crate::scene::{GaussianCloud, GaussianPrimitive};

use super::adam::Adam;
use super::config::DensifyConfig;

/// Running sums of each primitive's screen-space positional gradient norm
/// over the views it was visible in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradStats {
    pub sum: Vec<f64>,
    pub count: Vec<u32>,
}

impl GradStats {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: vec![0; n],
        }
    }

    pub fn record<T: Real>(&mut self, norms: &[T], visible: &[bool]) {
        for i in 0..self.sum.len() {
            if visible[i] {
                self.sum[i] += norms[i].as_f64();
                self.count[i] += 1;
            }
        }
    }

    pub fn average(&self, i: usize) -> f64 {
        if self.count[i] == 0 {
            0.0
        } else {
            self.sum[i] / self.count[i] as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub split: usize,
    pub pruned: usize,
}

/// Splits primitives whose average positional gradient exceeds the
/// threshold into two children offset within the parent's 1σ ellipsoid with
/// scale divided by `split_factor`, then prunes primitives whose opacity is
/// below `min_opacity`. Adam moments follow the surviving primitives;
/// children start with zero moments. The statistics are reset.
pub fn densify_and_prune<T: Real>(
    cloud: &mut GaussianCloud<T>,
    stats: &mut GradStats,
    adam: &mut Adam<T>,
    config: &DensifyConfig,
    rng: &mut impl Rng,
) -> DensifyReport {
    let block = GaussianPrimitive::<T>::param_len(cloud.sh_count());
    let mut report = DensifyReport::default();
    let mut next: Vec<GaussianPrimitive<T>> = Vec::with_capacity(cloud.len());
    let mut sources: Vec<Option<usize>> = Vec::with_capacity(cloud.len());
    let mut budget = config.max_gaussians.saturating_sub(cloud.len());
    let shrink = T::lit(config.split_factor.ln());
    for (i, p) in cloud.primitives.iter().enumerate() {
        let split = budget > 0 && stats.average(i) > config.grad_threshold;
        if !split {
            next.push(p.clone());
            sources.push(Some(i));
            continue;
        }
        budget -= 1;
        report.split += 1;
        let offset = sample_in_ellipsoid(p, rng);
        for sign in [T::one(), -T::one()] {
            let mut child = p.clone();
            for a in 0..3 {
                child.position[a] += sign * offset[a];
                child.log_scale[a] -= shrink;
            }
            next.push(child);
            sources.push(None);
        }
    }
    let min_opacity = T::lit(config.min_opacity);
    let mut kept = Vec::with_capacity(next.len());
    let mut kept_sources = Vec::with_capacity(next.len());
    for (p, s) in next.into_iter().zip(sources) {
        if p.opacity() < min_opacity {
            report.pruned += 1;
        } else {
            kept.push(p);
            kept_sources.push(s);
        }
    }
    cloud.primitives = kept;
    adam.remap_blocks(block, &kept_sources);
    *stats = GradStats::new(cloud.len());
    report
}

/// `R diag(s) u` with `u` uniform in the unit ball.
fn sample_in_ellipsoid<T: Real>(p: &GaussianPrimitive<T>, rng: &mut impl Rng) -> [T; 3] {
    let mut dir = [0.0f64; 3];
    let mut n2 = 0.0;
    while !(n2 > 1e-12) {
        dir = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        n2 = dir.iter().map(|v| v * v).sum();
    }
    let radius = rng.random_range(0.0..1.0f64).cbrt() / n2.sqrt();
    let u = dir.map(|v| T::lit(v * radius));
    let s = p.scale();
    let r = quat_to_mat(p.rotation).unwrap_or_else(crate::math::mat3_identity);
    let local = [s[0] * u[0], s[1] * u[1], s[2] * u[2]];
    crate::math::mat3_vec(&r, local)
}
