use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::imaging::{is_tissue, Image, Mask};
use crate::math::Real;

use super::providers::{DenoiseRequest, Denoiser};

/// DDPM variance schedule. Steps are numbered `1..=T`; step 0 denotes the
/// clean image (`ᾱ₀ = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    pub betas: Vec<f64>,
    /// `alpha_bars[t - 1] = Π_{s≤t} (1 − β_s)`.
    pub alpha_bars: Vec<f64>,
}

impl DiffusionSchedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidConfig("diffusion schedule needs at least one step".into()));
        }
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() || betas.iter().any(|&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidConfig("betas must lie in (0, 1)".into()));
        }
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("valid default schedule")
    }
}

/// One sampled `(t, ε)` pair together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub t: usize,
    pub eps: Image<f64>,
    /// Seed of the run that produced the draw.
    pub seed: u64,
}

impl NoiseDraw {
    /// `t ~ U{1..T}`, `ε ~ N(0, I)` shaped `width × height × channels`.
    pub fn sample(sched: &DiffusionSchedule, width: usize, height: usize, channels: usize, seed: u64, rng: &mut impl Rng) -> Self {
        let t = rng.random_range(1..=sched.steps());
        let data = (0..width * height * channels).map(|_| rng.sample(StandardNormal)).collect();
        Self {
            t,
            eps: Image::from_vec(width, height, channels, data).expect("sized above"),
            seed,
        }
    }
}

/// `√ᾱ · image + √(1 − ᾱ) · ε`.
pub fn add_noise_with<T: Real>(image: &Image<T>, eps: &Image<f64>, alpha_bar: f64) -> Result<Image<f64>> {
    image.ensure_same_shape(eps, "noise draw")?;
    let a = alpha_bar.sqrt();
    let b = (1.0 - alpha_bar).sqrt();
    let data = image.data.iter().zip(&eps.data).map(|(&c, &e)| a * c.as_f64() + b * e).collect();
    Image::from_vec(image.width, image.height, image.channels, data)
}

pub fn add_noise<T: Real>(image: &Image<T>, draw: &NoiseDraw, sched: &DiffusionSchedule) -> Result<Image<f64>> {
    if draw.t > sched.steps() {
        return Err(Error::InvalidInput(format!("step {} beyond schedule length {}", draw.t, sched.steps())));
    }
    add_noise_with(image, &draw.eps, sched.alpha_bar(draw.t))
}

#[derive(Debug, Clone)]
pub struct SdsOutput<T> {
    /// Mean of `(ε̂ − ε)²` over tissue pixels and channels.
    pub loss: f64,
    /// `ε̂ − ε`, zero on tool pixels.
    pub residual: Image<f64>,
    /// Gradient of `loss` w.r.t. the rendered image with the denoiser held
    /// constant: `(2/N) √ᾱ (ε̂ − ε)` on tissue pixels.
    pub grad: Image<T>,
    pub t: usize,
}

/// Score-distillation term for one rendered image. Provider failures surface
/// as [`Error::PriorUnavailable`].
pub fn sds_residual<T: Real>(
    image: &Image<T>,
    provider: &mut dyn Denoiser,
    sched: &DiffusionSchedule,
    draw: &NoiseDraw,
    mask: Option<&Mask>,
    view_id: &str,
    conditioning: &[u8],
) -> Result<SdsOutput<T>> {
    let noised = add_noise(image, draw, sched)?;
    let alpha_bar = sched.alpha_bar(draw.t);
    let request = DenoiseRequest {
        view_id,
        noised: &noised,
        t: draw.t,
        alpha_bar,
        conditioning,
        draw,
    };
    let pred = provider
        .predict(&request)
        .map_err(|e| Error::PriorUnavailable(format!("{} denoiser: {e}", provider.kind())))?;
    pred.ensure_same_shape(image, "denoiser prediction")?;

    let c = image.channels;
    let mut residual = Image::zeros(image.width, image.height, c);
    let mut sum = 0.0;
    let mut n = 0usize;
    for pix in 0..image.pixel_count() {
        if !is_tissue(mask, pix) {
            continue;
        }
        for ch in 0..c {
            let i = pix * c + ch;
            let r = pred.data[i] - draw.eps.data[i];
            residual.data[i] = r;
            sum += r * r;
            n += 1;
        }
    }
    let mut grad = Image::zeros(image.width, image.height, c);
    if n == 0 {
        return Ok(SdsOutput {
            loss: 0.0,
            residual,
            grad,
            t: draw.t,
        });
    }
    let k = 2.0 * alpha_bar.sqrt() / n as f64;
    for (g, &r) in grad.data.iter_mut().zip(&residual.data) {
        *g = T::lit(k * r);
    }
    Ok(SdsOutput {
        loss: sum / n as f64,
        residual,
        grad,
        t: draw.t,
    })
}
