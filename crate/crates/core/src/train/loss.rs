use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imaging::{is_tissue, Image, Mask};
use crate::math::Real;

use super::config::LossWeights;

/// Mean absolute error over tissue pixels (mask 0) and channels, with its
/// gradient `sign(Ĉ − C) / N`. A fully masked image gives zero.
pub fn masked_rgb_loss<T: Real, U: Real>(rendered: &Image<T>, target: &Image<U>, mask: Option<&Mask>) -> Result<(f64, Image<T>)> {
    rendered.ensure_same_shape(target, "target image")?;
    let c = rendered.channels;
    let tissue: Vec<usize> = (0..rendered.pixel_count()).filter(|&p| is_tissue(mask, p)).collect();
    let mut grad = Image::zeros(rendered.width, rendered.height, c);
    if tissue.is_empty() {
        log::debug!("rgb loss: every pixel is masked");
        return Ok((0.0, grad));
    }
    let n = (tissue.len() * c) as f64;
    let inv = T::lit(1.0 / n);
    let mut sum = 0.0;
    for p in tissue {
        for ch in 0..c {
            let i = p * c + ch;
            let d = rendered.data[i].as_f64() - target.data[i].as_f64();
            sum += d.abs();
            grad.data[i] = if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                T::zero()
            };
        }
    }
    Ok((sum / n, grad))
}

/// Per-term values of the composite objective for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeLoss {
    pub rgb: f64,
    pub diff: f64,
    pub geo: f64,
    pub total: f64,
}

impl CompositeLoss {
    pub fn new(rgb: f64, diff: f64, geo: f64, w: &LossWeights) -> Self {
        Self {
            rgb,
            diff,
            geo,
            total: w.rgb * rgb + w.diff * diff + w.geo * geo,
        }
    }
}
