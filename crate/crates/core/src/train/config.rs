use serde::{Deserialize, Serialize};

use crate::deform::{DeformationConfig, EncodingConfig, HeadConfig};
use crate::error::{Error, Result};

/// Weights of the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub rgb: f64,
    pub diff: f64,
    pub geo: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rgb: 1.0,
            diff: 0.001,
            geo: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1.6e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DensifyConfig {
    pub enabled: bool,
    /// Iterations between passes; passes run only during stage 1.
    pub interval: usize,
    /// Average screen-space positional gradient (pixels) above which a
    /// primitive is split.
    pub grad_threshold: f64,
    /// Activated opacity below which a primitive is removed.
    pub min_opacity: f64,
    /// Children's scale is the parent's divided by this.
    pub split_factor: f64,
    /// No splits once the cloud has this many primitives.
    pub max_gaussians: usize,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            interval: 200,
            grad_threshold: 2e-4,
            min_opacity: 0.005,
            split_factor: 1.6,
            max_gaussians: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Stage 1: canonical cloud only.
    pub warmup_iters: usize,
    /// Stage 2: joint optimization with the deformation field.
    pub extra_iters: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
    /// Number of training views drawn from the dataset.
    pub views: usize,
    pub prior_diff: bool,
    pub prior_geo: bool,
    pub densify: DensifyConfig,
    /// Half-width of the novel-view rotation range, degrees.
    pub novel_view_range_deg: f64,
    pub checkpoint_every: usize,
    pub sh_degree: usize,
    /// Activated opacity of freshly initialized primitives.
    pub init_opacity: f64,
    /// Rendered pixels with accumulated opacity at or below this are left
    /// out of the depth correlation.
    pub geo_min_accum: f64,
    pub diffusion_steps: usize,
    pub encoding_resolutions: Vec<usize>,
    pub encoding_features: usize,
    pub head_hidden_layers: usize,
    pub head_hidden_width: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            warmup_iters: 1000,
            extra_iters: 3000,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            views: 3,
            prior_diff: true,
            prior_geo: true,
            densify: DensifyConfig::default(),
            novel_view_range_deg: 5.0,
            checkpoint_every: 500,
            sh_degree: 2,
            init_opacity: 0.1,
            geo_min_accum: 0.5,
            diffusion_steps: 1000,
            encoding_resolutions: vec![32, 64],
            encoding_features: 16,
            head_hidden_layers: 2,
            head_hidden_width: 64,
        }
    }
}

impl TrainConfig {
    pub fn total_iters(&self) -> usize {
        self.warmup_iters + self.extra_iters
    }

    pub fn deformation(&self) -> DeformationConfig {
        DeformationConfig {
            encoding: EncodingConfig {
                resolutions: self.encoding_resolutions.clone(),
                feature_dim: self.encoding_features,
            },
            head: HeadConfig {
                hidden_layers: self.head_hidden_layers,
                hidden_width: self.head_hidden_width,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.warmup_iters == 0 || self.extra_iters == 0 {
            return bad("iteration counts must be positive");
        }
        if self.views == 0 || self.checkpoint_every == 0 || self.diffusion_steps == 0 {
            return bad("view budget, checkpoint interval and diffusion steps must be positive");
        }
        if self.densify.enabled && self.densify.interval == 0 {
            return bad("densification interval must be positive");
        }
        let w = self.weights;
        if [w.rgb, w.diff, w.geo].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("loss weights must be finite and non-negative");
        }
        let a = self.adam;
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return bad("invalid Adam hyper-parameters");
        }
        if !(self.init_opacity > 0.0 && self.init_opacity < 1.0) {
            return bad("initial opacity must lie in (0, 1)");
        }
        if !(self.novel_view_range_deg >= 0.0 && self.novel_view_range_deg.is_finite()) {
            return bad("novel-view range must be non-negative");
        }
        if self.sh_degree > crate::scene::sh::MAX_SH_DEGREE {
            return bad("SH degree above 3");
        }
        Ok(())
    }
}
