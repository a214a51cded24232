//! Composite objective, two-stage Adam schedule, novel-view sampling and
//! adaptive density control.

mod adam;
mod config;
mod densify;
mod loss;
mod novel;

pub use adam::Adam;
pub use config::{AdamConfig, DensifyConfig, LossWeights, TrainConfig};
pub use densify::{densify_and_prune, DensifyReport, GradStats};
pub use loss::{masked_rgb_loss, CompositeLoss};
pub use novel::{estimate_centroid, mean_up, orbit_view, sample_novel_view};

use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deform::{apply_deformation_traced, deformation_backward, DeformationField};
use crate::error::{Error, Result};
use crate::imaging::{is_tissue, Image};
use crate::math::{Real, Vec3};
use crate::priors::{geo_loss, sds_residual, Denoiser, DepthProvider, DepthRequest, DiffusionSchedule, NoiseDraw};
use crate::raster::{render, render_backward, RenderGrads, RenderOutput};
use crate::scene::{CameraView, CloudGrads, GaussianCloud};

/// A colored point used to seed the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPoint {
    pub position: Vec3<f64>,
    pub color: [f64; 3],
}

/// Isotropic primitives at the points, scaled by the RMS distance to the
/// three nearest neighbours, identity rotation, DC color from the point.
pub fn init_cloud<T: Real>(points: &[InitPoint], sh_degree: usize, opacity: f64) -> GaussianCloud<T> {
    let mut cloud = GaussianCloud::new(sh_degree);
    for (i, p) in points.iter().enumerate() {
        let mut nearest = [f64::INFINITY; 3];
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            let d2: f64 = (0..3).map(|a| (p.position[a] - q.position[a]).powi(2)).sum();
            if d2 < nearest[2] {
                nearest[2] = d2;
                nearest.sort_by(|a, b| a.total_cmp(b));
            }
        }
        let finite: Vec<f64> = nearest.iter().copied().filter(|d| d.is_finite()).collect();
        let scale = if finite.is_empty() {
            0.01
        } else {
            (finite.iter().sum::<f64>() / finite.len() as f64).sqrt().max(1e-4)
        };
        cloud.push_activated(
            p.position.map(T::lit),
            [T::lit(scale); 3],
            [T::one(), T::zero(), T::zero(), T::zero()],
            T::lit(opacity),
            p.color.map(T::lit),
        );
    }
    cloud
}

/// Prior models used by a run; a missing provider disables its term.
#[derive(Default)]
pub struct Providers {
    pub denoiser: Option<Box<dyn Denoiser>>,
    pub depth: Option<Box<dyn DepthProvider>>,
}

#[derive(Debug, Clone)]
pub struct TrainState<T> {
    pub cloud: GaussianCloud<T>,
    pub field: DeformationField<T>,
    pub adam_cloud: Adam<T>,
    pub adam_field: Adam<T>,
    /// Completed steps.
    pub iter: usize,
    pub rng: ChaCha8Rng,
    pub stats: GradStats,
    /// Scene centroid used for novel-view orbits.
    pub centroid: Vec3<f64>,
    depth_cache: HashMap<String, Image<f32>>,
}

impl<T: Real> TrainState<T> {
    pub fn new(cloud: GaussianCloud<T>, field: DeformationField<T>, views: &[CameraView], config: &TrainConfig) -> Self {
        let centroid = estimate_centroid(views)
            .or_else(|| cloud.centroid().map(|c| c.map(|v| v.as_f64())))
            .unwrap_or([0.0; 3]);
        Self {
            adam_cloud: Adam::new(config.adam, cloud.flatten().len()),
            adam_field: Adam::new(config.adam, field.param_count()),
            stats: GradStats::new(cloud.len()),
            cloud,
            field,
            iter: 0,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            centroid,
            depth_cache: HashMap::new(),
        }
    }

    /// Whether the next step optimizes the deformation field.
    pub fn joint(&self, config: &TrainConfig) -> bool {
        self.iter >= config.warmup_iters
    }

    /// The cloud as seen at time `tau` (deformed in stage 2).
    pub fn cloud_at(&self, tau: f64, config: &TrainConfig) -> GaussianCloud<T> {
        if self.joint(config) {
            crate::deform::apply_deformation(&self.cloud, &self.field, T::lit(tau))
        } else {
            self.cloud.clone()
        }
    }

    fn depth_prior(&mut self, view: &CameraView, provider: &mut dyn DepthProvider) -> Result<Image<f32>> {
        if let Some(d) = self.depth_cache.get(&view.id) {
            return Ok(d.clone());
        }
        let image = view
            .gt_image
            .as_ref()
            .ok_or_else(|| Error::InvalidDataset(format!("view {} has no image for depth prediction", view.id)))?;
        let d = provider.predict(&DepthRequest { view_id: &view.id, image })?;
        if d.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalDegeneracy(format!("depth prior for view {} is not finite", view.id)));
        }
        self.depth_cache.insert(view.id.clone(), d.clone());
        Ok(d)
    }
}

/// The sampled novel view and noise draw for the diffusion term.
#[derive(Debug, Clone)]
pub struct NovelSample {
    pub view: CameraView,
    pub draw: NoiseDraw,
}

/// Gradients of one step's objective.
#[derive(Debug, Clone)]
pub struct StepGradients<T> {
    pub cloud: CloudGrads<T>,
    /// Present in stage 2.
    pub field: Option<DeformationField<T>>,
    pub loss: CompositeLoss,
    /// Per primitive screen-space positional gradient norm from the training view.
    pub mean2d_grad_norm: Vec<T>,
    pub visible: Vec<bool>,
}

struct Rendered<T> {
    cloud: GaussianCloud<T>,
    trace: Option<crate::deform::DeformTrace<T>>,
    output: RenderOutput<T>,
}

fn render_at<T: Real>(state: &TrainState<T>, view: &CameraView, joint: bool) -> Result<Rendered<T>> {
    let (cloud, trace) = if joint {
        let (c, t) = apply_deformation_traced(&state.cloud, &state.field, T::lit(view.time));
        (c, Some(t))
    } else {
        (state.cloud.clone(), None)
    };
    let output = render(&cloud, view)?;
    Ok(Rendered { cloud, trace, output })
}

/// Backpropagates render gradients to the canonical cloud and, in stage 2,
/// the field.
fn backprop<T: Real>(
    state: &TrainState<T>,
    r: &Rendered<T>,
    grads: &RenderGrads<T>,
) -> Result<(CloudGrads<T>, Option<DeformationField<T>>, crate::raster::BackwardOutput<T>)> {
    let back = render_backward(&r.output, &r.cloud, grads)?;
    match &r.trace {
        Some(trace) => {
            let (canonical, field) = deformation_backward(&state.cloud, &state.field, trace, &back.cloud)?;
            Ok((canonical, Some(field), back))
        }
        None => Ok((back.cloud.clone(), None, back)),
    }
}

fn scaled<T: Real>(img: Image<T>, k: f64) -> Image<T> {
    let k = T::lit(k);
    img.map(|v| v * k)
}

fn check_finite(term: &'static str, value: f64, iter: usize, view: &CameraView) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            term,
            iter,
            detail: format!("view {} produced {value}", view.id),
        })
    }
}

/// Objective and gradients for one training view (RGB and depth terms) and
/// an optional novel view (diffusion term). Does not modify parameters.
pub fn compute_gradients<T: Real>(
    state: &mut TrainState<T>,
    view: &CameraView,
    novel: Option<&NovelSample>,
    providers: &mut Providers,
    config: &TrainConfig,
    sched: &DiffusionSchedule,
) -> Result<StepGradients<T>> {
    let w = config.weights;
    let joint = state.joint(config);
    let step = state.iter + 1;
    let gt = view
        .gt_image
        .as_ref()
        .ok_or_else(|| Error::InvalidDataset(format!("training view {} has no image", view.id)))?;

    let main = render_at(state, view, joint)?;
    let out = &main.output;
    let (l_rgb, g_rgb) = masked_rgb_loss(&out.color, gt, view.mask.as_ref())?;
    check_finite("rgb", l_rgb, step, view)?;
    let mut grads = RenderGrads {
        color: Some(scaled(g_rgb, w.rgb)),
        depth: None,
        accum: None,
    };

    let mut l_geo = 0.0;
    if config.prior_geo {
        if let Some(provider) = providers.depth.as_deref_mut() {
            match state.depth_prior(view, provider) {
                Ok(prior) => {
                    let min_accum = T::lit(config.geo_min_accum);
                    let valid: Vec<bool> = (0..out.accum.data.len())
                        .map(|p| is_tissue(view.mask.as_ref(), p) && out.accum.data[p] > min_accum)
                        .collect();
                    let geo = geo_loss(&out.normalized_depth(), &prior, &valid)?;
                    check_finite("geo", geo.loss, step, view)?;
                    l_geo = geo.loss;
                    let mut g_depth = Image::zeros(out.width, out.height, 1);
                    let mut g_accum = Image::zeros(out.width, out.height, 1);
                    let k = T::lit(w.geo);
                    for p in 0..valid.len() {
                        if !valid[p] {
                            continue;
                        }
                        // D = raw / accum.
                        let g = k * geo.grad.data[p];
                        let a = out.accum.data[p];
                        g_depth.data[p] = g / a;
                        g_accum.data[p] = -g * out.depth.data[p] / (a * a);
                    }
                    grads.depth = Some(g_depth);
                    grads.accum = Some(g_accum);
                }
                Err(e) => log::warn!("step {step}: depth prior unavailable for view {}: {e}", view.id),
            }
        }
    }

    let (mut cloud_grads, mut field_grads, back) = backprop(state, &main, &grads)?;

    let mut l_diff = 0.0;
    if let (true, Some(novel), Some(denoiser)) = (config.prior_diff, novel, providers.denoiser.as_deref_mut()) {
        let side = render_at(state, &novel.view, joint)?;
        match sds_residual(
            &side.output.color,
            denoiser,
            sched,
            &novel.draw,
            novel.view.mask.as_ref(),
            &novel.view.id,
            &[],
        ) {
            Ok(sds) => {
                check_finite("diff", sds.loss, step, &novel.view)?;
                l_diff = sds.loss;
                let g = RenderGrads {
                    color: Some(scaled(sds.grad, w.diff)),
                    depth: None,
                    accum: None,
                };
                let (cg, fg, _) = backprop(state, &side, &g)?;
                cloud_grads.add_scaled(&cg, T::one());
                if let (Some(acc), Some(fg)) = (field_grads.as_mut(), fg) {
                    let mut a = acc.flatten();
                    for (x, y) in a.iter_mut().zip(fg.flatten()) {
                        *x += y;
                    }
                    acc.load_flat(&a)?;
                }
            }
            Err(e) => log::warn!("step {step}: diffusion term skipped: {e}"),
        }
    }
    if field_grads.is_none() && joint {
        field_grads = Some(state.field.zeros_like());
    }

    let loss = CompositeLoss::new(l_rgb, l_diff, l_geo, &w);
    check_finite("total", loss.total, step, view)?;
    Ok(StepGradients {
        cloud: cloud_grads,
        field: field_grads,
        loss,
        mean2d_grad_norm: back.mean2d_grad_norm,
        visible: back.visible,
    })
}

/// One Adam step with precomputed gradients, then density control when due.
pub fn apply_gradients<T: Real>(state: &mut TrainState<T>, grads: &StepGradients<T>, config: &TrainConfig) -> Result<()> {
    let joint = state.joint(config);
    let mut params = state.cloud.flatten();
    state.adam_cloud.update(&mut params, &grads.cloud.flatten());
    state.cloud = GaussianCloud::unflatten(&params, state.cloud.sh_degree)?;
    if joint {
        if let Some(fg) = &grads.field {
            let mut p = state.field.flatten();
            state.adam_field.update(&mut p, &fg.flatten());
            state.field.load_flat(&p)?;
        }
    }
    state.iter += 1;
    let d = &config.densify;
    if !joint && d.enabled {
        state.stats.record(&grads.mean2d_grad_norm, &grads.visible);
        if state.iter % d.interval == 0 && state.iter < config.warmup_iters {
            let report = densify_and_prune(&mut state.cloud, &mut state.stats, &mut state.adam_cloud, d, &mut state.rng);
            if report != DensifyReport::default() {
                log::debug!(
                    "step {}: split {}, pruned {}, {} primitives",
                    state.iter,
                    report.split,
                    report.pruned,
                    state.cloud.len()
                );
            }
        }
    }
    Ok(())
}

/// Samples a training view (and a novel view when the diffusion term is on),
/// computes gradients and applies one update.
pub fn train_step<T: Real>(
    state: &mut TrainState<T>,
    views: &[CameraView],
    providers: &mut Providers,
    config: &TrainConfig,
    sched: &DiffusionSchedule,
) -> Result<CompositeLoss> {
    if views.is_empty() {
        return Err(Error::InvalidDataset("no training views".into()));
    }
    let view = &views[state.rng.random_range(0..views.len())];
    let novel = if config.prior_diff && providers.denoiser.is_some() {
        let centroid = state.centroid;
        let nv = sample_novel_view(views, centroid, &mut state.rng, config.novel_view_range_deg);
        let draw = NoiseDraw::sample(sched, nv.width, nv.height, 3, config.seed, &mut state.rng);
        Some(NovelSample { view: nv, draw })
    } else {
        None
    };
    let grads = compute_gradients(state, view, novel.as_ref(), providers, config, sched)?;
    apply_gradients(state, &grads, config)?;
    Ok(grads.loss)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: usize,
    pub l_rgb: f64,
    pub l_diff: f64,
    pub l_geo: f64,
    pub total: f64,
    pub n_gaussians: usize,
    pub wall_ms: f64,
}

/// Receives log records and checkpoint opportunities from [`run_schedule`].
pub trait TrainObserver<T> {
    fn on_step(&mut self, _record: &LogRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _state: &TrainState<T>) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl<T> TrainObserver<T> for NoObserver {}

/// Runs the remaining steps of the two-stage schedule. A checkpoint is
/// offered every `checkpoint_every` steps and after the last one.
pub fn run_schedule<T: Real>(
    state: &mut TrainState<T>,
    views: &[CameraView],
    providers: &mut Providers,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<Vec<LogRecord>> {
    config.validate()?;
    let sched = DiffusionSchedule::linear(config.diffusion_steps, 1e-4, 0.02)?;
    let total = config.total_iters();
    let start = Instant::now();
    let mut log = Vec::with_capacity(total.saturating_sub(state.iter));
    while state.iter < total {
        let loss = train_step(state, views, providers, config, &sched)?;
        let rec = LogRecord {
            iter: state.iter,
            l_rgb: loss.rgb,
            l_diff: loss.diff,
            l_geo: loss.geo,
            total: loss.total,
            n_gaussians: state.cloud.len(),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer.on_step(&rec)?;
        log.push(rec);
        if state.iter % config.checkpoint_every == 0 || state.iter == total {
            observer.on_checkpoint(state)?;
        }
    }
    Ok(log)
}
