//! Synthetic tissue-like scenes with known geometry, rendered by the engine
//! in 64-bit precision.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::SceneModel;
use crate::imaging::Mask;
use crate::math::{normalize3, Vec3};
use crate::raster::render;
use crate::scene::{CameraView, GaussianCloud, Intrinsics};
use crate::train::{InitPoint, TrainConfig};

use super::checkpoint::{save_checkpoint, Checkpoint, CheckpointMeta};
use super::dataset::{extrinsics_to_matrix, strided_subset, DatasetManifest, Split, ViewEntry, MANIFEST_VERSION};
use super::pfm::write_pfm;
use super::png::{write_mask_png, write_png_rgb};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub seed: u64,
    pub n_gaussians: usize,
    /// Training views.
    pub n_views: usize,
    /// Held-out views interleaved between the training views on the ring.
    pub held_out: usize,
    pub deform: bool,
    pub width: usize,
    pub height: usize,
    /// Amplitude of the planted rigid motion along the viewing axis.
    pub deform_amplitude: f64,
    /// Camera ring radius and distance from the surface.
    pub ring_radius: f64,
    pub ring_distance: f64,
    pub fov_x: f64,
    /// Standard deviation of the init-point jitter, in grid spacings.
    pub init_jitter: f64,
    /// Extra standard deviation of the init points along the viewing axis,
    /// in world units.
    pub init_depth_noise: f64,
    pub tool_mask: bool,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_gaussians: 400,
            n_views: 12,
            held_out: 2,
            deform: false,
            width: 64,
            height: 64,
            deform_amplitude: 0.05,
            ring_radius: 0.6,
            ring_distance: 3.0,
            fov_x: 0.6,
            init_jitter: 0.1,
            init_depth_noise: 0.1,
            tool_mask: true,
        }
    }
}

/// Tool color painted over masked pixels.
pub const TOOL_COLOR: [f64; 3] = [0.7, 0.72, 0.75];
/// Half-extent of the tissue patch.
const EXTENT: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub params: SynthParams,
    pub cloud: GaussianCloud<f64>,
    /// Rendered views in manifest order, payloads attached.
    pub views: Vec<CameraView>,
    pub splits: Vec<Split>,
    pub init_points: Vec<InitPoint>,
    pub bounds_min: Vec3<f64>,
    pub bounds_max: Vec3<f64>,
}

fn height(x: f64, y: f64) -> f64 {
    0.15 * (1.3 * PI * x).sin() * (1.1 * PI * y).cos() + 0.1 * x
}

fn surface_normal(x: f64, y: f64) -> Vec3<f64> {
    let zx = 0.15 * 1.3 * PI * (1.3 * PI * x).cos() * (1.1 * PI * y).cos() + 0.1;
    let zy = -0.15 * 1.1 * PI * (1.3 * PI * x).sin() * (1.1 * PI * y).sin();
    // The surface faces the cameras, which sit on the -z side.
    normalize3([zx, zy, -1.0])
}

fn tissue_color(x: f64, y: f64, rng: &mut impl Rng) -> [f64; 3] {
    let vessel = (7.0 * x + 3.0 * (4.0 * y).sin()).sin() * (5.0 * y - 2.0 * x).cos();
    let v = ((vessel - 0.55) / 0.45).clamp(0.0, 1.0);
    let base = [0.82, 0.42, 0.38];
    let dark = [0.55, 0.12, 0.14];
    let shade = 0.9 + 0.1 * (2.0 * x + y).cos();
    std::array::from_fn(|c| {
        let jitter: f64 = rng.random_range(-0.03..0.03);
        ((base[c] * (1.0 - v) + dark[c] * v) * shade + jitter).clamp(0.02, 0.98)
    })
}

/// Quaternion turning +z onto `n`.
fn align_z(n: Vec3<f64>) -> [f64; 4] {
    let w = 1.0 + n[2];
    if w < 1e-9 {
        return [0.0, 1.0, 0.0, 0.0];
    }
    let q = [w, -n[1], n[0], 0.0];
    let s = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / s)
}

/// Tool rectangle entering from the bottom edge and sliding with time.
pub fn tool_mask(width: usize, height: usize, time: f64) -> Mask {
    let x0 = ((0.05 + 0.55 * time) * width as f64) as usize;
    let x1 = (x0 + (0.2 * width as f64).ceil() as usize).min(width);
    let y0 = (0.55 * height as f64) as usize;
    let mut m = Mask::empty(width, height);
    for y in y0..height {
        for x in x0..x1 {
            m.data[y * width + x] = true;
        }
    }
    m
}

/// Rigid planted motion at time `tau`.
pub fn planted_offset(params: &SynthParams, tau: f64) -> Vec3<f64> {
    if params.deform {
        [0.0, 0.0, params.deform_amplitude * (2.0 * PI * tau).sin()]
    } else {
        [0.0; 3]
    }
}

pub fn synth_generate(params: &SynthParams) -> Result<SyntheticScene> {
    if params.n_views == 0 {
        return Err(Error::InvalidConfig("synthetic scene needs at least one training view".into()));
    }
    if params.n_gaussians == 0 || params.width == 0 || params.height == 0 {
        return Err(Error::InvalidConfig("synthetic scene needs primitives and a resolution".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let gx = (params.n_gaussians as f64).sqrt().ceil() as usize;
    let gy = params.n_gaussians.div_ceil(gx);
    let step = [2.0 * EXTENT / gx as f64, 2.0 * EXTENT / gy as f64];
    let spacing = step[0].max(step[1]);

    let mut cloud = GaussianCloud::new(0);
    let mut init_points = Vec::with_capacity(params.n_gaussians);
    for i in 0..params.n_gaussians {
        let (ix, iy) = (i % gx, i / gx);
        let x = -EXTENT + (ix as f64 + 0.5 + rng.random_range(-0.25..0.25)) * step[0];
        let y = -EXTENT + (iy as f64 + 0.5 + rng.random_range(-0.25..0.25)) * step[1];
        let position = [x, y, height(x, y)];
        let color = tissue_color(x, y, &mut rng);
        let s = [spacing * rng.random_range(0.45..0.7), spacing * rng.random_range(0.45..0.7), spacing * 0.08];
        let q = align_z(surface_normal(x, y));
        cloud.push_activated(position, s, q, 0.95, color);

        let jitter = |rng: &mut ChaCha8Rng| params.init_jitter * spacing * rng.sample::<f64, _>(StandardNormal);
        init_points.push(InitPoint {
            position: [
                x + jitter(&mut rng),
                y + jitter(&mut rng),
                position[2] + jitter(&mut rng) + params.init_depth_noise * rng.sample::<f64, _>(StandardNormal),
            ],
            color: color.map(|c| (c + 0.03 * rng.sample::<f64, _>(StandardNormal)).clamp(0.0, 1.0)),
        });
    }

    let total = params.n_views + params.held_out;
    let held: Vec<usize> = if params.held_out == 0 {
        Vec::new()
    } else {
        // Offset by half a stride so held-out views fall between training views.
        strided_subset(total, params.held_out)?
            .into_iter()
            .map(|i| (i + total / (2 * params.held_out)).min(total - 1))
            .collect()
    };
    let k = Intrinsics::from_fov(params.width, params.height, params.fov_x);
    let mut views = Vec::with_capacity(total);
    let mut splits = Vec::with_capacity(total);
    for i in 0..total {
        let phi = 2.0 * PI * i as f64 / total as f64;
        let tau = if total == 1 { 0.0 } else { i as f64 / (total - 1) as f64 };
        let eye = [params.ring_radius * phi.cos(), params.ring_radius * phi.sin(), -params.ring_distance];
        let mut view = CameraView::look_at(format!("view{i:03}"), k, params.width, params.height, eye, [0.0; 3], [0.0, -1.0, 0.0], tau);
        let off = planted_offset(params, tau);
        let mut moved = cloud.clone();
        for p in &mut moved.primitives {
            for a in 0..3 {
                p.position[a] += off[a];
            }
        }
        let out = render(&moved, &view)?;
        let mut color = out.color.clone();
        let mask = params.tool_mask.then(|| tool_mask(params.width, params.height, tau));
        if let Some(m) = &mask {
            for (pix, &tool) in m.data.iter().enumerate() {
                if tool {
                    color.data[pix * 3..pix * 3 + 3].copy_from_slice(&TOOL_COLOR);
                }
            }
        }
        view.gt_image = Some(color.cast());
        view.gt_depth = Some(out.normalized_depth().cast());
        view.mask = mask;
        views.push(view);
        splits.push(if held.contains(&i) { Split::Test } else { Split::Train });
    }

    let pad = 0.1 + if params.deform { params.deform_amplitude } else { 0.0 };
    let mut bounds_min = [f64::INFINITY; 3];
    let mut bounds_max = [f64::NEG_INFINITY; 3];
    for p in &cloud.primitives {
        for a in 0..3 {
            bounds_min[a] = bounds_min[a].min(p.position[a] - pad);
            bounds_max[a] = bounds_max[a].max(p.position[a] + pad);
        }
    }
    Ok(SyntheticScene {
        params: params.clone(),
        cloud,
        views,
        splits,
        init_points,
        bounds_min,
        bounds_max,
    })
}

impl SyntheticScene {
    /// Writes `manifest.json`, PFM/PNG images, depths, masks, init points,
    /// the ground-truth cloud and the generator parameters under `dir`.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        for sub in ["images", "depth", "masks"] {
            std::fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
        }
        let mut entries = Vec::with_capacity(self.views.len());
        for (v, split) in self.views.iter().zip(&self.splits) {
            let image = format!("images/{}.pfm", v.id);
            let image_png = format!("images/{}.png", v.id);
            let depth = format!("depth/{}.pfm", v.id);
            let gt = v.gt_image.as_ref().expect("rendered");
            write_pfm(&dir.join(&image), gt)?;
            write_png_rgb(&dir.join(&image_png), gt)?;
            write_pfm(&dir.join(&depth), v.gt_depth.as_ref().expect("rendered"))?;
            let mask = match &v.mask {
                Some(m) => {
                    let p = format!("masks/{}.png", v.id);
                    write_mask_png(&dir.join(&p), m)?;
                    Some(p)
                }
                None => None,
            };
            entries.push(ViewEntry {
                id: v.id.clone(),
                split: *split,
                image,
                image_png: Some(image_png),
                depth: Some(depth),
                mask,
                intrinsics: v.intrinsics,
                world_to_camera: extrinsics_to_matrix(&v.rotation, v.translation),
                time: v.time,
            });
        }
        let points = dir.join("init_points.json");
        std::fs::write(&points, serde_json::to_vec(&self.init_points)?).map_err(|e| Error::io(&points, e))?;
        let params = dir.join("scene.json");
        std::fs::write(&params, serde_json::to_vec_pretty(&self.params)?).map_err(|e| Error::io(&params, e))?;
        let gt = Checkpoint::from_model(
            &SceneModel::static_cloud(self.cloud.cast()),
            CheckpointMeta {
                iter: 0,
                sh_degree: self.cloud.sh_degree,
                bounds_min: self.bounds_min,
                bounds_max: self.bounds_max,
                has_field: false,
                config: TrainConfig::default(),
            },
        );
        save_checkpoint(&dir.join("ground_truth.esck"), &gt)?;
        let manifest = DatasetManifest {
            version: MANIFEST_VERSION,
            width: self.params.width,
            height: self.params.height,
            near: crate::raster::NEAR_PLANE,
            bounds_min: self.bounds_min,
            bounds_max: self.bounds_max,
            init_points: Some("init_points.json".into()),
            ground_truth: Some("ground_truth.esck".into()),
            views: entries,
        };
        manifest.write(&dir.join(super::dataset::MANIFEST_FILE))?;
        Ok(manifest)
    }
}
