//! Visual, geometric and speed metrics, and the reports built from them.

pub mod metrics;

pub use metrics::{
    delta1, depth_ssim, depth_tv, min_max_normalize, psnr, psnr_from_mse, psnr_masked, ssim, ssim_pointwise,
    DELTA1_THRESHOLD, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW,
};

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::deform::{apply_deformation, DeformationField};
use crate::error::{Error, Result};
use crate::imaging::{is_tissue, Image};
use crate::math::Real;
use crate::priors::pearson_corr;
use crate::raster::{render_with, RenderOutput, RenderSettings};
use crate::scene::{CameraView, GaussianCloud};

/// A canonical cloud with an optional deformation field.
#[derive(Debug, Clone)]
pub struct SceneModel<T> {
    pub cloud: GaussianCloud<T>,
    pub field: Option<DeformationField<T>>,
}

impl<T: Real> SceneModel<T> {
    pub fn static_cloud(cloud: GaussianCloud<T>) -> Self {
        Self { cloud, field: None }
    }

    /// Renders `view` at its own time without backward intermediates.
    pub fn render(&self, view: &CameraView) -> Result<RenderOutput<T>> {
        match &self.field {
            Some(f) => render_with(&apply_deformation(&self.cloud, f, T::lit(view.time)), view, RenderSettings::inference()),
            None => render_with(&self.cloud, view, RenderSettings::inference()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub fps: f64,
    pub frames: usize,
    pub seconds: f64,
}

pub fn fps_from(frames: usize, seconds: f64) -> f64 {
    frames as f64 / seconds
}

/// Times `repeats` passes over `views` after one untimed warm-up pass. Every
/// repeat must reproduce the warm-up images exactly.
pub fn measure_fps<T: Real>(model: &SceneModel<T>, views: &[CameraView], repeats: usize) -> Result<FpsReport> {
    if repeats == 0 {
        return Err(Error::InvalidInput("fps needs at least one repeat".into()));
    }
    if views.is_empty() {
        return Err(Error::InvalidInput("fps needs at least one view".into()));
    }
    let reference: Vec<Image<T>> = views.iter().map(|v| model.render(v).map(|o| o.color)).collect::<Result<_>>()?;
    let mut seconds = 0.0;
    for _ in 0..repeats {
        for (v, r) in views.iter().zip(&reference) {
            let start = Instant::now();
            let out = model.render(v)?;
            seconds += start.elapsed().as_secs_f64();
            if out.color.data != r.data {
                return Err(Error::NumericalDegeneracy(format!("render of view {} is not deterministic", v.id)));
            }
        }
    }
    let frames = repeats * views.len();
    Ok(FpsReport {
        fps: fps_from(frames, seconds),
        frames,
        seconds,
    })
}

/// Serde adapter writing non-finite values as `"inf"`, `"-inf"` or `"nan"`.
pub mod tagged_f64 {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Tag(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Tag(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(de::Error::custom(format!("unexpected metric value {t:?}"))),
            },
        }
    }

    pub mod option {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
            match v {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
            #[derive(Deserialize)]
            struct Wrap(#[serde(with = "super")] f64);
            Ok(Option::<Wrap>::deserialize(d)?.map(|w| w.0))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub id: String,
    #[serde(with = "tagged_f64")]
    pub psnr: f64,
    pub ssim: f64,
    /// TV of the min-max normalized rendered depth.
    pub depth_tv: f64,
    #[serde(with = "tagged_f64::option")]
    pub delta1: Option<f64>,
    #[serde(with = "tagged_f64::option")]
    pub depth_ssim: Option<f64>,
    /// Pearson correlation of rendered and reference depth.
    #[serde(with = "tagged_f64::option")]
    pub depth_corr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(with = "tagged_f64")]
    pub psnr: f64,
    pub ssim: f64,
    pub depth_tv: f64,
    #[serde(with = "tagged_f64::option")]
    pub delta1: Option<f64>,
    #[serde(with = "tagged_f64::option")]
    pub depth_ssim: Option<f64>,
    #[serde(with = "tagged_f64::option")]
    pub depth_corr: Option<f64>,
    #[serde(with = "tagged_f64::option")]
    pub fps: Option<f64>,
    /// Reserved; never computed.
    pub lpips: Option<f64>,
    pub views: Vec<ViewMetrics>,
}

/// Rendered image with tool pixels replaced by the reference.
fn composite_tool<T: Real>(rendered: &Image<T>, gt: &Image<f32>, view: &CameraView) -> Image<f64> {
    let mut out = rendered.cast::<f64>();
    let c = out.channels;
    for pix in 0..out.pixel_count() {
        if !is_tissue(view.mask.as_ref(), pix) {
            for ch in 0..c {
                out.data[pix * c + ch] = gt.data[pix * c + ch] as f64;
            }
        }
    }
    out
}

/// Metrics of one view. PSNR counts tissue pixels; SSIM compares images
/// with tool pixels taken from the reference; depth metrics use tissue
/// pixels with positive depth in both maps.
pub fn evaluate_view<T: Real>(model: &SceneModel<T>, view: &CameraView) -> Result<ViewMetrics> {
    let gt = view
        .gt_image
        .as_ref()
        .ok_or_else(|| Error::InvalidDataset(format!("view {} has no reference image", view.id)))?;
    let out = model.render(view)?;
    let psnr = psnr_masked(&out.color, gt, view.mask.as_ref())?;
    let ssim = ssim(&composite_tool(&out.color, gt, view), gt)?;
    let depth = out.normalized_depth();
    let depth_tv = depth_tv(&min_max_normalize(&depth));
    let (mut delta, mut dssim, mut corr) = (None, None, None);
    if let Some(gd) = &view.gt_depth {
        let valid: Vec<bool> = (0..depth.data.len())
            .map(|p| is_tissue(view.mask.as_ref(), p) && depth.data[p] > T::zero() && gd.data[p] > 0.0)
            .collect();
        delta = optional(delta1(&depth, gd, &valid))?;
        dssim = Some(depth_ssim(&depth, gd)?);
        corr = optional(pearson_corr(&depth, gd, &valid))?;
    }
    Ok(ViewMetrics {
        id: view.id.clone(),
        psnr,
        ssim,
        depth_tv,
        delta1: delta,
        depth_ssim: dssim,
        depth_corr: corr,
    })
}

fn optional(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateStatistics(msg)) => {
            log::warn!("metric skipped: {msg}");
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Per-view metrics and their means; FPS when `fps_repeats` is set.
pub fn evaluate<T: Real>(model: &SceneModel<T>, views: &[CameraView], fps_repeats: Option<usize>) -> Result<MetricReport> {
    if views.is_empty() {
        return Err(Error::InvalidInput("no views to evaluate".into()));
    }
    let per: Vec<ViewMetrics> = views.iter().map(|v| evaluate_view(model, v)).collect::<Result<_>>()?;
    let fps = match fps_repeats {
        Some(r) => Some(measure_fps(model, views, r)?.fps),
        None => None,
    };
    Ok(MetricReport {
        psnr: mean(per.iter().map(|v| v.psnr)).expect("non-empty"),
        ssim: mean(per.iter().map(|v| v.ssim)).expect("non-empty"),
        depth_tv: mean(per.iter().map(|v| v.depth_tv)).expect("non-empty"),
        delta1: mean(per.iter().filter_map(|v| v.delta1)),
        depth_ssim: mean(per.iter().filter_map(|v| v.depth_ssim)),
        depth_corr: mean(per.iter().filter_map(|v| v.depth_corr)),
        fps,
        lpips: None,
        views: per,
    })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    match v {
        Some(v) if v.is_infinite() && v > 0.0 => "inf".into(),
        Some(v) => format!("{v:.digits$}"),
        None => "n/a".into(),
    }
}

const HEADER: [&str; 6] = ["FPS", "TV", "δ₁", "depth-SSIM", "PSNR", "SSIM"];

fn row(label: &str, r: &MetricReport) -> String {
    format!(
        "{label:<24} {:>8} {:>10} {:>8} {:>10} {:>8} {:>8}",
        cell(r.fps, 1),
        cell(Some(r.depth_tv), 2),
        cell(r.delta1, 4),
        cell(r.depth_ssim, 4),
        cell(Some(r.psnr), 2),
        cell(Some(r.ssim), 4)
    )
}

fn header(label: &str) -> String {
    format!(
        "{label:<24} {:>8} {:>10} {:>8} {:>10} {:>8} {:>8}",
        HEADER[0], HEADER[1], HEADER[2], HEADER[3], HEADER[4], HEADER[5]
    )
}

impl MetricReport {
    /// Plain-text table: the aggregate row, then one row per view.
    pub fn to_table(&self) -> String {
        let mut s = header("view");
        s.push('\n');
        s.push_str(&row("mean", self));
        s.push('\n');
        for v in &self.views {
            let single = MetricReport {
                psnr: v.psnr,
                ssim: v.ssim,
                depth_tv: v.depth_tv,
                delta1: v.delta1,
                depth_ssim: v.depth_ssim,
                depth_corr: v.depth_corr,
                fps: None,
                lpips: None,
                views: Vec::new(),
            };
            let _ = writeln!(s, "{}", row(&v.id, &single));
        }
        s
    }
}

/// One aggregate row per labelled run.
pub fn ablation_table(rows: &[(String, MetricReport)]) -> String {
    let mut s = header("run");
    s.push('\n');
    for (label, r) in rows {
        let _ = writeln!(s, "{}", row(label, r));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infinite_psnr_roundtrips_through_json() {
        let v = ViewMetrics {
            id: "a".into(),
            psnr: f64::INFINITY,
            ssim: 1.0,
            depth_tv: 0.0,
            delta1: None,
            depth_ssim: Some(1.0),
            depth_corr: None,
        };
        let s = serde_json::to_string(&v).unwrap();
        assert!(s.contains("\"psnr\":\"inf\""), "{s}");
        assert!(s.contains("\"delta1\":null"));
        let back: ViewMetrics = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn fps_arithmetic() {
        assert_eq!(fps_from(10, 2.0), 5.0);
    }
}
