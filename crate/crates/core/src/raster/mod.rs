//! CPU tile rasterizer: projection, depth sorting, 16×16 tile binning,
//! front-to-back color/depth compositing and the analytic backward pass.

mod backward;
mod blend;
mod project;

pub use backward::{render_backward, BackwardOutput, RenderGrads};
pub use blend::{blend_pixel, Blender};
pub use project::{footprint_alpha, project, CameraParams, ProjectedGaussian};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::math::Real;
use crate::scene::{CameraView, GaussianCloud};

pub const TILE_SIZE: usize = 16;
/// Primitives at camera-z at or below this are culled.
pub const NEAR_PLANE: f64 = 0.01;
pub const ALPHA_MAX: f64 = 0.99;
pub const TRANSMITTANCE_MIN: f64 = 1e-4;
/// Isotropic screen-space variance added to every projected covariance.
pub const LOW_PASS: f64 = 0.3;
/// Footprint support radius in standard deviations.
pub const CUTOFF_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RenderSettings {
    pub tile_size: usize,
    /// Keep what the backward pass needs.
    pub keep_intermediates: bool,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            tile_size: TILE_SIZE,
            keep_intermediates: true,
        }
    }
}

impl RenderSettings {
    pub fn inference() -> Self {
        Self {
            keep_intermediates: false,
            ..Self::default()
        }
    }
}

/// Tile grid with per-tile lists of projected-Gaussian indices, each list in
/// front-to-back order.
#[derive(Debug, Clone)]
pub struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileBins {
    fn build<T: Real>(projected: &[ProjectedGaussian<T>], width: usize, height: usize, tile_size: usize) -> Self {
        let tiles_x = width.div_ceil(tile_size);
        let tiles_y = height.div_ceil(tile_size);
        let mut lists = vec![Vec::new(); tiles_x * tiles_y];
        for (gi, g) in projected.iter().enumerate() {
            let Some((x0, x1, y0, y1)) = pixel_bounds(g, width, height) else {
                continue;
            };
            for ty in (y0 / tile_size)..=(y1 / tile_size) {
                for tx in (x0 / tile_size)..=(x1 / tile_size) {
                    lists[ty * tiles_x + tx].push(gi as u32);
                }
            }
        }
        Self {
            tile_size,
            tiles_x,
            tiles_y,
            lists,
        }
    }

    /// Pixel rectangle `(x0, x1, y0, y1)` (exclusive ends) covered by a tile.
    pub fn tile_rect(&self, tile: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, (x0 + self.tile_size).min(width), y0, (y0 + self.tile_size).min(height))
    }
}

/// Inclusive pixel bounds of the cutoff ellipse's bounding box, clipped to
/// the image; `None` when it misses the image.
fn pixel_bounds<T: Real>(g: &ProjectedGaussian<T>, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
    let lo_x = (g.mean2d[0] - g.extent[0]).ceil().as_f64().max(0.0);
    let hi_x = (g.mean2d[0] + g.extent[0]).floor().as_f64().min(width as f64 - 1.0);
    let lo_y = (g.mean2d[1] - g.extent[1]).ceil().as_f64().max(0.0);
    let hi_y = (g.mean2d[1] + g.extent[1]).floor().as_f64().min(height as f64 - 1.0);
    if !(lo_x <= hi_x && lo_y <= hi_y) {
        return None;
    }
    Some((lo_x as usize, hi_x as usize, lo_y as usize, hi_y as usize))
}

/// Everything the backward pass needs from a forward render.
#[derive(Debug, Clone)]
pub struct RenderCache<T> {
    pub camera: CameraParams<T>,
    pub projected: Vec<ProjectedGaussian<T>>,
    pub bins: TileBins,
    /// Per pixel: number of tile-list entries visited before compositing stopped.
    pub n_visited: Vec<u32>,
    pub n_primitives: usize,
}

#[derive(Debug, Clone)]
pub struct RenderOutput<T> {
    pub width: usize,
    pub height: usize,
    /// `H×W×3` composited color.
    pub color: Image<T>,
    /// `H×W` raw blended depth `Σ dᵢ αᵢ Tᵢ`.
    pub depth: Image<T>,
    /// `H×W` accumulated opacity `Σ αᵢ Tᵢ`.
    pub accum: Image<T>,
    pub cache: Option<RenderCache<T>>,
}

impl<T: Real> RenderOutput<T> {
    /// Depth divided by accumulated opacity; zero where nothing was composited.
    pub fn normalized_depth(&self) -> Image<T> {
        let mut out = Image::zeros(self.width, self.height, 1);
        for (o, (&d, &a)) in out.data.iter_mut().zip(self.depth.data.iter().zip(&self.accum.data)) {
            if a > T::zero() {
                *o = d / a;
            }
        }
        out
    }

    /// Hash of the render's discrete structure: per pixel, the ordered
    /// contributors, their clamp states and where compositing stopped. The
    /// outputs are smooth in the parameters wherever this is unchanged.
    /// `None` without intermediates.
    pub fn structure_signature(&self) -> Option<u64> {
        use std::hash::{Hash, Hasher};
        let cache = self.cache.as_ref()?;
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for g in &cache.projected {
            (g.index, g.cache.clamped).hash(&mut h);
        }
        for tile in 0..cache.bins.lists.len() {
            let list = &cache.bins.lists[tile];
            let (x0, x1, y0, y1) = cache.bins.tile_rect(tile, self.width, self.height);
            for y in y0..y1 {
                for x in x0..x1 {
                    let pix = y * self.width + x;
                    let p = [T::lit(x as f64), T::lit(y as f64)];
                    let visited = cache.n_visited[pix] as usize;
                    (pix, visited == list.len()).hash(&mut h);
                    for &gi in &list[..visited] {
                        let (alpha, _, _, clamped) = project::footprint(&cache.projected[gi as usize], p);
                        if alpha > T::zero() {
                            (gi, clamped).hash(&mut h);
                        }
                    }
                }
            }
        }
        Some(h.finish())
    }

    /// Drops the backward intermediates.
    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }
}

pub fn render<T: Real>(cloud: &GaussianCloud<T>, view: &CameraView) -> Result<RenderOutput<T>> {
    render_with(cloud, view, RenderSettings::default())
}

pub fn render_with<T: Real>(cloud: &GaussianCloud<T>, view: &CameraView, settings: RenderSettings) -> Result<RenderOutput<T>> {
    if settings.tile_size == 0 {
        return Err(Error::InvalidInput("tile size must be positive".into()));
    }
    cloud.validate()?;
    for (index, p) in cloud.primitives.iter().enumerate() {
        if let Some(attribute) = p.non_finite_attribute() {
            return Err(Error::NonFinite { index, attribute });
        }
    }
    let (width, height) = (view.width, view.height);
    let camera = CameraParams::<T>::from_view(view);
    let projected = project::project_with(cloud, &camera);
    let bins = TileBins::build(&projected, width, height, settings.tile_size);

    struct TileResult<T> {
        color: Vec<[T; 3]>,
        depth: Vec<T>,
        accum: Vec<T>,
        visited: Vec<u32>,
    }

    let results: Vec<TileResult<T>> = (0..bins.lists.len())
        .into_par_iter()
        .map(|tile| {
            let (x0, x1, y0, y1) = bins.tile_rect(tile, width, height);
            let list = &bins.lists[tile];
            let n = (x1 - x0) * (y1 - y0);
            let mut res = TileResult {
                color: Vec::with_capacity(n),
                depth: Vec::with_capacity(n),
                accum: Vec::with_capacity(n),
                visited: Vec::with_capacity(n),
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = [T::lit(x as f64), T::lit(y as f64)];
                    let mut b = Blender::new();
                    let mut visited = 0u32;
                    for &gi in list {
                        let g = &projected[gi as usize];
                        let alpha = footprint_alpha(g, p);
                        if alpha > T::zero() && !b.push(g.color, alpha, g.depth) {
                            break;
                        }
                        visited += 1;
                    }
                    res.color.push(b.color);
                    res.depth.push(b.depth);
                    res.accum.push(b.accum);
                    res.visited.push(visited);
                }
            }
            res
        })
        .collect();

    let mut color = Image::zeros(width, height, 3);
    let mut depth = Image::zeros(width, height, 1);
    let mut accum = Image::zeros(width, height, 1);
    let mut n_visited = vec![0u32; width * height];
    for (tile, res) in results.into_iter().enumerate() {
        let (x0, x1, y0, y1) = bins.tile_rect(tile, width, height);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let pix = y * width + x;
                color.data[pix * 3..pix * 3 + 3].copy_from_slice(&res.color[k]);
                depth.data[pix] = res.depth[k];
                accum.data[pix] = res.accum[k];
                n_visited[pix] = res.visited[k];
                k += 1;
            }
        }
    }

    let cache = settings.keep_intermediates.then(|| RenderCache {
        camera,
        projected,
        bins,
        n_visited,
        n_primitives: cloud.len(),
    });
    Ok(RenderOutput {
        width,
        height,
        color,
        depth,
        accum,
        cache,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Intrinsics;

    fn on_axis_view(size: usize) -> CameraView {
        let k = Intrinsics::from_fov(size, size, 1.0);
        CameraView::look_at("v", k, size, size, [0.0, 0.0, -4.0], [0.0; 3], [0.0, -1.0, 0.0], 0.0)
    }

    #[test]
    fn empty_cloud_renders_black() {
        let out = render(&GaussianCloud::<f64>::new(0), &on_axis_view(16)).unwrap();
        assert!(out.color.data.iter().all(|&v| v == 0.0));
        assert!(out.depth.data.iter().all(|&v| v == 0.0));
        assert!(out.accum.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn on_axis_gaussian_projects_to_principal_point() {
        let mut cloud = GaussianCloud::<f64>::new(0);
        cloud.push_activated([0.0, 0.0, 1.0], [0.2; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
        let view = on_axis_view(16);
        let p = project(&cloud, &view);
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].mean2d, [view.intrinsics.cx, view.intrinsics.cy]);
    }

    #[test]
    fn isotropic_projection_matches_analytic_footprint() {
        let sigma = 0.3;
        let mut cloud = GaussianCloud::<f64>::new(0);
        cloud.push_activated([0.0, 0.0, 1.0], [sigma; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
        let view = on_axis_view(32);
        let p = &project(&cloud, &view)[0];
        let z = 5.0;
        let f = view.intrinsics.fx;
        let expect = (f * sigma / z).powi(2) + 0.3;
        assert!((p.cov2d[0][0] - expect).abs() < 1e-12);
        assert!((p.cov2d[1][1] - expect).abs() < 1e-12);
        assert!(p.cov2d[0][1].abs() < 1e-12);
    }

    #[test]
    fn primitives_behind_camera_are_culled() {
        let mut cloud = GaussianCloud::<f64>::new(0);
        cloud.push_activated([0.0, 0.0, -5.0], [0.2; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
        assert!(project(&cloud, &on_axis_view(16)).is_empty());
    }

    #[test]
    fn opaque_wide_gaussian_depth_equals_camera_z() {
        let mut cloud = GaussianCloud::<f64>::new(0);
        cloud.push_activated([0.0, 0.0, 1.0], [2.0; 3], [1.0, 0.0, 0.0, 0.0], 0.9999, [0.5; 3]);
        let view = on_axis_view(16);
        let out = render(&cloud, &view).unwrap();
        let nd = out.normalized_depth();
        assert!((nd.get(8, 8, 0) - 5.0).abs() < 1e-6);
        assert!((out.accum.get(8, 8, 0) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn non_finite_attribute_names_primitive() {
        let mut cloud = GaussianCloud::<f64>::new(0);
        cloud.push_activated([0.0, 0.0, 1.0], [0.2; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
        cloud.push_activated([0.0, 0.0, 1.0], [0.2; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.5; 3]);
        cloud.primitives[1].position[0] = f64::NAN;
        match render(&cloud, &on_axis_view(16)) {
            Err(Error::NonFinite { index, attribute }) => {
                assert_eq!(index, 1);
                assert_eq!(attribute, "position");
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
