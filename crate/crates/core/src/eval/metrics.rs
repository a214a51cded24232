use crate::error::{Error, Result};
use crate::imaging::{is_tissue, Image, Mask};
use crate::math::Real;

/// SSIM window side and standard deviation.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;
/// δ₁ ratio threshold.
pub const DELTA1_THRESHOLD: f64 = 1.25;

/// `10·log10(1/MSE)` over all entries; `+∞` for identical images.
pub fn psnr<T: Real, U: Real>(a: &Image<T>, b: &Image<U>) -> Result<f64> {
    psnr_masked(a, b, None)
}

/// PSNR over tissue pixels only.
pub fn psnr_masked<T: Real, U: Real>(a: &Image<T>, b: &Image<U>, mask: Option<&Mask>) -> Result<f64> {
    a.ensure_same_shape(b, "psnr operands")?;
    let c = a.channels;
    let mut sum = 0.0;
    let mut n = 0usize;
    for pix in 0..a.pixel_count() {
        if !is_tissue(mask, pix) {
            continue;
        }
        for ch in 0..c {
            let d = a.data[pix * c + ch].as_f64() - b.data[pix * c + ch].as_f64();
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::DegenerateStatistics("no pixels to compare".into()));
    }
    Ok(psnr_from_mse(sum / n as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable Gaussian filter over the valid region only.
fn filter_valid(x: &[f64], width: usize, height: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width + 1 - SSIM_WINDOW;
    let oh = height + 1 - SSIM_WINDOW;
    let mut rows = vec![0.0; ow * height];
    for y in 0..height {
        for ox in 0..ow {
            rows[y * ow + ox] = (0..SSIM_WINDOW).map(|k| w[k] * x[y * width + ox + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for oy in 0..oh {
        for ox in 0..ow {
            out[oy * ow + ox] = (0..SSIM_WINDOW).map(|k| w[k] * rows[(oy + k) * ow + ox]).sum();
        }
    }
    out
}

/// Mean SSIM map value with an 11×11 Gaussian window (σ = 1.5) evaluated
/// where the window fits, averaged over channels.
pub fn ssim<T: Real, U: Real>(a: &Image<T>, b: &Image<U>) -> Result<f64> {
    a.ensure_same_shape(b, "ssim operands")?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::InvalidInput(format!(
            "image {}×{} smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} SSIM window",
            a.width, a.height
        )));
    }
    let w = gaussian_window();
    let (width, height) = (a.width, a.height);
    let mut total = 0.0;
    for ch in 0..a.channels {
        let xa: Vec<f64> = a.data.iter().skip(ch).step_by(a.channels).map(|v| v.as_f64()).collect();
        let xb: Vec<f64> = b.data.iter().skip(ch).step_by(b.channels).map(|v| v.as_f64()).collect();
        let f = |v: &[f64]| filter_valid(v, width, height, &w);
        let mu_a = f(&xa);
        let mu_b = f(&xb);
        let aa = f(&xa.iter().map(|v| v * v).collect::<Vec<_>>());
        let bb = f(&xb.iter().map(|v| v * v).collect::<Vec<_>>());
        let ab = f(&xa.iter().zip(&xb).map(|(p, q)| p * q).collect::<Vec<_>>());
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = aa[i] - ma * ma;
            let var_b = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            sum += ssim_pointwise(ma, mb, var_a, var_b, cov);
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / a.channels as f64)
}

/// SSIM from local statistics.
pub fn ssim_pointwise(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64) -> f64 {
    ((2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2))
        / ((mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2))
}

/// Anisotropic total variation: sum of absolute differences between
/// horizontal and vertical neighbours.
pub fn depth_tv<T: Real>(d: &Image<T>) -> f64 {
    let (w, h) = (d.width, d.height);
    let at = |x: usize, y: usize| d.data[y * w + x].as_f64();
    let mut tv = 0.0;
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                tv += (at(x + 1, y) - at(x, y)).abs();
            }
            if y + 1 < h {
                tv += (at(x, y + 1) - at(x, y)).abs();
            }
        }
    }
    tv
}

/// Copy rescaled to `[0, 1]`; constant maps become zero.
pub fn min_max_normalize<T: Real>(d: &Image<T>) -> Image<f64> {
    let lo = d.data.iter().map(|v| v.as_f64()).fold(f64::INFINITY, f64::min);
    let hi = d.data.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    Image {
        width: d.width,
        height: d.height,
        channels: d.channels,
        data: d
            .data
            .iter()
            .map(|v| if range > 0.0 { (v.as_f64() - lo) / range } else { 0.0 })
            .collect(),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fraction of valid pixels with `max(D̂/D, D/D̂) < 1.25` after scaling `D̂`
/// so its median matches the reference.
pub fn delta1<T: Real, U: Real>(pred: &Image<T>, reference: &Image<U>, valid: &[bool]) -> Result<f64> {
    pred.ensure_same_shape(reference, "delta1 operands")?;
    if valid.len() != pred.data.len() {
        return Err(Error::Shape("validity map size differs from depth".into()));
    }
    let mut p = Vec::new();
    let mut r = Vec::new();
    for ((&a, &b), &ok) in pred.data.iter().zip(&reference.data).zip(valid) {
        if ok {
            let (a, b) = (a.as_f64(), b.as_f64());
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::InvalidInput("delta1 needs strictly positive finite depths".into()));
            }
            p.push(a);
            r.push(b);
        }
    }
    if p.is_empty() {
        return Err(Error::DegenerateStatistics("no valid depth pixels".into()));
    }
    let k = median(r.clone()) / median(p.clone());
    let hits = p
        .iter()
        .zip(&r)
        .filter(|(&a, &b)| {
            let a = a * k;
            (a / b).max(b / a) < DELTA1_THRESHOLD
        })
        .count();
    Ok(hits as f64 / p.len() as f64)
}

/// SSIM of two depth maps after min-max normalizing each.
pub fn depth_ssim<T: Real, U: Real>(pred: &Image<T>, reference: &Image<U>) -> Result<f64> {
    ssim(&min_max_normalize(pred), &min_max_normalize(reference))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, c: usize, f: impl Fn(usize) -> f64) -> Image<f64> {
        Image::from_vec(w, h, c, (0..w * h * c).map(f).collect()).unwrap()
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for k in 0..SSIM_WINDOW {
            assert_eq!(w[k], w[SSIM_WINDOW - 1 - k]);
        }
    }

    #[test]
    fn small_image_is_rejected() {
        let a = img(10, 20, 1, |_| 0.0);
        assert!(ssim(&a, &a).is_err());
    }

    #[test]
    fn tv_of_constant_and_ramp() {
        assert_eq!(depth_tv(&img(5, 4, 1, |_| 2.5)), 0.0);
        let ramp = img(5, 3, 1, |i| (i % 5) as f64 / 4.0);
        assert!((depth_tv(&ramp) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn masked_psnr_ignores_tool_pixels() {
        let a = img(2, 1, 1, |i| i as f64);
        let b = img(2, 1, 1, |_| 0.0);
        let mask = Mask {
            width: 2,
            height: 1,
            data: vec![false, true],
        };
        assert_eq!(psnr_masked(&a, &b, Some(&mask)).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&a, &b).unwrap(), 10.0 * 2f64.log10());
    }
}
