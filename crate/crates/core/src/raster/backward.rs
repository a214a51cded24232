//! Analytic backward pass of the rasterizer.
//!
//! Per pixel the front-to-back sweep is replayed to recover `αᵢ` and `Tᵢ`,
//! then walked back to front with suffix sums so that
//! `∂C/∂αᵢ = cᵢTᵢ − (Σ_{k>i} c_k α_k T_k) / (1 − αᵢ)` (same for depth and
//! accumulated opacity). Per-tile partial gradients are reduced in tile order,
//! so results do not depend on the worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::math::{normalize_backward, unit_quat_to_mat_backward, Mat2, Mat3, Real};
use crate::scene::sh::{sh_basis, sh_basis_grad};
use crate::scene::{CloudGrads, GaussianCloud};

use super::project::footprint;
use super::RenderOutput;

/// Upstream gradients of a scalar loss with respect to the render outputs.
/// Missing fields are treated as zero.
#[derive(Debug, Clone, Default)]
pub struct RenderGrads<T> {
    pub color: Option<Image<T>>,
    pub depth: Option<Image<T>>,
    pub accum: Option<Image<T>>,
}

#[derive(Debug, Clone)]
pub struct BackwardOutput<T> {
    pub cloud: CloudGrads<T>,
    /// Per primitive: norm of the loss gradient w.r.t. its projected 2D mean
    /// (pixels); zero for culled primitives.
    pub mean2d_grad_norm: Vec<T>,
    /// Per primitive: whether it was projected in this view.
    pub visible: Vec<bool>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Grad2d<T> {
    color: [T; 3],
    depth: T,
    opacity: T,
    mean: [T; 2],
    conic: Mat2<T>,
}

impl<T: Real> Grad2d<T> {
    fn add(&mut self, o: &Self) {
        for ch in 0..3 {
            self.color[ch] += o.color[ch];
        }
        self.depth += o.depth;
        self.opacity += o.opacity;
        self.mean[0] += o.mean[0];
        self.mean[1] += o.mean[1];
        for i in 0..2 {
            for j in 0..2 {
                self.conic[i][j] += o.conic[i][j];
            }
        }
    }
}

struct Contribution<T> {
    pos: usize,
    alpha: T,
    raw: T,
    power: T,
    clamped: bool,
    transmittance: T,
}

pub fn render_backward<T: Real>(
    output: &RenderOutput<T>,
    cloud: &GaussianCloud<T>,
    grads: &RenderGrads<T>,
) -> Result<BackwardOutput<T>> {
    let cache = output.cache.as_ref().ok_or(Error::MissingIntermediates)?;
    if cache.n_primitives != cloud.len() {
        return Err(Error::Shape(format!(
            "backward cloud has {} primitives, forward had {}",
            cloud.len(),
            cache.n_primitives
        )));
    }
    let (width, height) = (output.width, output.height);
    if let Some(g) = &grads.color {
        g.ensure_same_shape(&output.color, "color gradient")?;
    }
    if let Some(g) = &grads.depth {
        g.ensure_same_shape(&output.depth, "depth gradient")?;
    }
    if let Some(g) = &grads.accum {
        g.ensure_same_shape(&output.accum, "accum gradient")?;
    }
    let bins = &cache.bins;
    let projected = &cache.projected;
    let zero = T::zero();

    let tile_grads: Vec<Vec<Grad2d<T>>> = (0..bins.lists.len())
        .into_par_iter()
        .map(|tile| {
            let list = &bins.lists[tile];
            let mut local = vec![Grad2d::<T>::default(); list.len()];
            if list.is_empty() {
                return local;
            }
            let (x0, x1, y0, y1) = bins.tile_rect(tile, width, height);
            let mut contribs: Vec<Contribution<T>> = Vec::new();
            for y in y0..y1 {
                for x in x0..x1 {
                    let pix = y * width + x;
                    let g_c = grads
                        .color
                        .as_ref()
                        .map_or([zero; 3], |g| [g.data[pix * 3], g.data[pix * 3 + 1], g.data[pix * 3 + 2]]);
                    let g_d = grads.depth.as_ref().map_or(zero, |g| g.data[pix]);
                    let g_a = grads.accum.as_ref().map_or(zero, |g| g.data[pix]);
                    if g_c.iter().all(|&v| v == zero) && g_d == zero && g_a == zero {
                        continue;
                    }
                    let p = [T::lit(x as f64), T::lit(y as f64)];
                    contribs.clear();
                    let mut t = T::one();
                    for (pos, &gi) in list.iter().enumerate().take(cache.n_visited[pix] as usize) {
                        let g = &projected[gi as usize];
                        let (alpha, raw, power, clamped) = footprint(g, p);
                        if alpha > zero {
                            contribs.push(Contribution {
                                pos,
                                alpha,
                                raw,
                                power,
                                clamped,
                                transmittance: t,
                            });
                            t *= T::one() - alpha;
                        }
                    }
                    let mut s_c = [zero; 3];
                    let mut s_d = zero;
                    let mut s_a = zero;
                    for c in contribs.iter().rev() {
                        let g = &projected[list[c.pos] as usize];
                        let w = c.alpha * c.transmittance;
                        let lg = &mut local[c.pos];
                        for ch in 0..3 {
                            lg.color[ch] += g_c[ch] * w;
                        }
                        lg.depth += g_d * w;
                        let front = g_c[0] * g.color[0] + g_c[1] * g.color[1] + g_c[2] * g.color[2] + g_d * g.depth + g_a;
                        let behind = g_c[0] * s_c[0] + g_c[1] * s_c[1] + g_c[2] * s_c[2] + g_d * s_d + g_a * s_a;
                        let d_alpha = c.transmittance * front - behind / (T::one() - c.alpha);
                        for ch in 0..3 {
                            s_c[ch] += g.color[ch] * w;
                        }
                        s_d += g.depth * w;
                        s_a += w;
                        if c.clamped {
                            continue;
                        }
                        lg.opacity += d_alpha * c.power.exp();
                        let d_power = d_alpha * c.raw;
                        let dx = p[0] - g.mean2d[0];
                        let dy = p[1] - g.mean2d[1];
                        let q = &g.conic;
                        lg.mean[0] += d_power * (q[0][0] * dx + q[0][1] * dy);
                        lg.mean[1] += d_power * (q[1][0] * dx + q[1][1] * dy);
                        let h = T::lit(-0.5) * d_power;
                        lg.conic[0][0] += h * dx * dx;
                        lg.conic[0][1] += h * dx * dy;
                        lg.conic[1][0] += h * dx * dy;
                        lg.conic[1][1] += h * dy * dy;
                    }
                }
            }
            local
        })
        .collect();

    let mut per_gaussian = vec![Grad2d::<T>::default(); projected.len()];
    for (tile, local) in tile_grads.iter().enumerate() {
        for (pos, g) in local.iter().enumerate() {
            per_gaussian[bins.lists[tile][pos] as usize].add(g);
        }
    }

    let cam = &cache.camera;
    let sh_degree = cloud.sh_degree;
    let prim_grads: Vec<(usize, crate::scene::GaussianPrimitive<T>, T)> = projected
        .par_iter()
        .zip(per_gaussian.par_iter())
        .map(|(g, g2)| {
            let prim = &cloud.primitives[g.index];
            let c = &g.cache;
            let mut out = crate::scene::GaussianPrimitive::zeroed(prim.sh.len());

            // Color through the SH basis and the view direction.
            let mut g_col = g2.color;
            for ch in 0..3 {
                if c.clamped[ch] {
                    g_col[ch] = zero;
                }
            }
            let basis = sh_basis(sh_degree, c.view_dir);
            let basis_grad = sh_basis_grad(sh_degree, c.view_dir);
            let mut g_dir = [zero; 3];
            for (i, (b, bg)) in basis.iter().zip(&basis_grad).enumerate() {
                let mut s = zero;
                for ch in 0..3 {
                    out.sh[i][ch] = *b * g_col[ch];
                    s += prim.sh[i][ch] * g_col[ch];
                }
                for k in 0..3 {
                    g_dir[k] += s * bg[k];
                }
            }
            let pos_from_dir = normalize_backward(c.view_dir.map(|v| v * c.view_dist), g_dir);

            // Opacity logit.
            let o = g.alpha_base;
            out.opacity_logit = g2.opacity * o * (T::one() - o);

            // dL/dΣ₂ = -Q (dL/dQ) Q
            let q = &g.conic;
            let gq = &g2.conic;
            let mut tmp = [[zero; 2]; 2];
            let mut g_cov2d = [[zero; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    tmp[i][j] = gq[i][0] * q[0][j] + gq[i][1] * q[1][j];
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    g_cov2d[i][j] = -(q[i][0] * tmp[0][j] + q[i][1] * tmp[1][j]);
                }
            }

            let [tx, ty, tz] = c.cam_mean;
            let inv_z = T::one() / tz;
            let inv_z2 = inv_z * inv_z;
            let inv_z3 = inv_z2 * inv_z;
            let two = T::lit(2.0);
            let mut g_t = [
                g2.mean[0] * cam.fx * inv_z,
                g2.mean[1] * cam.fy * inv_z,
                -g2.mean[0] * cam.fx * tx * inv_z2 - g2.mean[1] * cam.fy * ty * inv_z2 + g2.depth,
            ];

            // Σ₂ = J Σc Jᵀ: dL/dJ = 2 G J Σc, dL/dΣc = Jᵀ G J.
            let jac = &c.jac;
            let mut j_sigma = [[zero; 3]; 2];
            for i in 0..2 {
                for k in 0..3 {
                    j_sigma[i][k] = jac[i][0] * c.cov_cam[0][k] + jac[i][1] * c.cov_cam[1][k] + jac[i][2] * c.cov_cam[2][k];
                }
            }
            let mut g_jac = [[zero; 3]; 2];
            for i in 0..2 {
                for k in 0..3 {
                    g_jac[i][k] = two * (g_cov2d[i][0] * j_sigma[0][k] + g_cov2d[i][1] * j_sigma[1][k]);
                }
            }
            g_t[0] += g_jac[0][2] * (-cam.fx * inv_z2);
            g_t[1] += g_jac[1][2] * (-cam.fy * inv_z2);
            g_t[2] += g_jac[0][0] * (-cam.fx * inv_z2)
                + g_jac[0][2] * (two * cam.fx * tx * inv_z3)
                + g_jac[1][1] * (-cam.fy * inv_z2)
                + g_jac[1][2] * (two * cam.fy * ty * inv_z3);

            let mut g_cov_cam: Mat3<T> = [[zero; 3]; 3];
            for k in 0..3 {
                for l in 0..3 {
                    let mut acc = zero;
                    for i in 0..2 {
                        for j in 0..2 {
                            acc += jac[i][k] * g_cov2d[i][j] * jac[j][l];
                        }
                    }
                    g_cov_cam[k][l] = acc;
                }
            }
            // Σc = W Σ Wᵀ  =>  dL/dΣ = Wᵀ (dL/dΣc) W
            let w = &cam.rotation;
            let mut g_cov: Mat3<T> = [[zero; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    let mut acc = zero;
                    for k in 0..3 {
                        for l in 0..3 {
                            acc += w[k][a] * g_cov_cam[k][l] * w[l][b];
                        }
                    }
                    g_cov[a][b] = acc;
                }
            }
            // Σ = M Mᵀ, M = R diag(s)  =>  dL/dM = 2 (dL/dΣ) M
            let r = &c.rot;
            let s = c.scale;
            let mut g_rot: Mat3<T> = [[zero; 3]; 3];
            let mut g_scale = [zero; 3];
            for k in 0..3 {
                for i in 0..3 {
                    let mut g_m = zero;
                    for l in 0..3 {
                        g_m += g_cov[k][l] * r[l][i] * s[i];
                    }
                    g_m *= two;
                    g_scale[i] += g_m * r[k][i];
                    g_rot[k][i] = g_m * s[i];
                }
            }
            for i in 0..3 {
                out.log_scale[i] = g_scale[i] * s[i];
            }
            let g_unit = unit_quat_to_mat_backward(c.unit_quat, &g_rot);
            out.rotation = normalize_backward(c.unit_quat.map(|v| v * c.quat_norm), g_unit);

            // t = W μ + b  =>  dL/dμ = Wᵀ dL/dt
            for a in 0..3 {
                out.position[a] = w[0][a] * g_t[0] + w[1][a] * g_t[1] + w[2][a] * g_t[2] + pos_from_dir[a];
            }
            let mean_norm = (g2.mean[0] * g2.mean[0] + g2.mean[1] * g2.mean[1]).sqrt();
            (g.index, out, mean_norm)
        })
        .collect();

    let mut cloud_grads = cloud.zeros_like();
    let mut mean2d_grad_norm = vec![zero; cloud.len()];
    let mut visible = vec![false; cloud.len()];
    for (index, g, n) in prim_grads {
        cloud_grads.primitives[index] = g;
        mean2d_grad_norm[index] = n;
        visible[index] = true;
    }
    Ok(BackwardOutput {
        cloud: cloud_grads,
        mean2d_grad_norm,
        visible,
    })
}
