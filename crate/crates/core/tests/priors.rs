use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tissuesplat_core::imaging::{Image, Mask};
use tissuesplat_core::priors::wire::Frame;
use tissuesplat_core::priors::{
    add_noise, geo_loss, pearson_corr, sds_residual, DenoiseRequest, Denoiser, DepthProvider, DepthRequest, DiffusionSchedule,
    NoiseDraw, OracleDenoiser, SubprocessProvider, ZeroDenoiser,
};
use tissuesplat_core::Error;

const ECHO: &str = env!("CARGO_BIN_EXE_espr_echo");

/// `ε̂ = C̃ − offset`: identity Jacobian, so differentiating through it
/// reproduces the stop-gradient SDS gradient exactly.
struct ShiftDenoiser(f64);

impl Denoiser for ShiftDenoiser {
    fn kind(&self) -> &'static str {
        "shift"
    }
    fn predict(&mut self, req: &DenoiseRequest<'_>) -> tissuesplat_core::Result<Image<f64>> {
        Ok(req.noised.map(|v| v - self.0))
    }
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Image<f64> {
    Image::from_vec(w, h, c, (0..w * h * c).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn tool_mask(w: usize, h: usize) -> Mask {
    let mut m = Mask::empty(w, h);
    for y in 0..h / 2 {
        for x in 0..w / 3 {
            m.data[y * w + x] = true;
        }
    }
    m
}

#[test]
fn oracle_denoiser_gives_zero_loss_and_gradient() {
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let img = random_image(&mut rng, 8, 6, 3);
        let draw = NoiseDraw::sample(&sched, 8, 6, 3, 1, &mut rng);
        let out = sds_residual(&img, &mut OracleDenoiser, &sched, &draw, None, "v", b"").unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.data.iter().all(|&g| g == 0.0));
    }
}

#[test]
fn zero_denoiser_loss_is_mean_squared_noise() {
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let img = random_image(&mut rng, 8, 8, 3);
    let draw = NoiseDraw::sample(&sched, 8, 8, 3, 7, &mut rng);
    let out = sds_residual(&img, &mut ZeroDenoiser, &sched, &draw, None, "v", b"").unwrap();
    let expect = draw.eps.data.iter().map(|e| e * e).sum::<f64>() / draw.eps.data.len() as f64;
    assert!((out.loss - expect).abs() < 1e-7);

    // Same seed, same draw.
    let mut rng2 = ChaCha8Rng::seed_from_u64(7);
    let _ = random_image(&mut rng2, 8, 8, 3);
    assert_eq!(NoiseDraw::sample(&sched, 8, 8, 3, 7, &mut rng2), draw);
}

#[test]
fn sds_gradient_matches_finite_differences() {
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random_image(&mut rng, 6, 5, 3);
    let mask = tool_mask(6, 5);
    let draw = NoiseDraw::sample(&sched, 6, 5, 3, 3, &mut rng);
    let mut den = ShiftDenoiser(0.3);
    let out = sds_residual(&img, &mut den, &sched, &draw, Some(&mask), "v", b"").unwrap();
    let h = 1e-6;
    for i in 0..img.data.len() {
        let mut p = img.clone();
        p.data[i] += h;
        let mut m = img.clone();
        m.data[i] -= h;
        let lp = sds_residual(&p, &mut den, &sched, &draw, Some(&mask), "v", b"").unwrap().loss;
        let lm = sds_residual(&m, &mut den, &sched, &draw, Some(&mask), "v", b"").unwrap().loss;
        let fd = (lp - lm) / (2.0 * h);
        let an = out.grad.data[i];
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
        assert!(err < 1e-4, "pixel value {i}: fd {fd} analytic {an}");
        if mask.data[i / 3] {
            assert_eq!(an, 0.0);
        }
    }
}

#[test]
fn add_noise_mean_matches_scaled_image() {
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let img = Image::from_vec(1, 1, 1, vec![0.7_f64]).unwrap();
    let t = 300;
    let ab = sched.alpha_bar(t);
    let n = 10_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let mut draw = NoiseDraw::sample(&sched, 1, 1, 1, 11, &mut rng);
        draw.t = t;
        sum += add_noise(&img, &draw, &sched).unwrap().data[0];
    }
    let mean = sum / n as f64;
    let sigma = ((1.0 - ab) / n as f64).sqrt();
    assert!((mean - ab.sqrt() * 0.7).abs() < 3.0 * sigma, "mean {mean}");
}

#[test]
fn geo_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = Image::from_vec(8, 8, 1, (0..64).map(|_| rng.random_range(1.0..5.0)).collect()).unwrap();
    let b = Image::from_vec(8, 8, 1, (0..64).map(|_| rng.random_range(1.0..5.0)).collect()).unwrap();
    let valid: Vec<bool> = (0..64).map(|i| i % 7 != 3).collect();
    let g = geo_loss(&a, &b, &valid).unwrap();
    let h = 1e-6;
    for i in 0..64 {
        let mut p = a.clone();
        p.data[i] += h;
        let mut m = a.clone();
        m.data[i] -= h;
        let fd = (geo_loss(&p, &b, &valid).unwrap().loss - geo_loss(&m, &b, &valid).unwrap().loss) / (2.0 * h);
        let an = g.grad.data[i];
        let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        assert!(err < 1e-5, "pixel {i}: fd {fd} analytic {an}");
    }
}

#[test]
fn subprocess_echo_returns_payload() {
    let mut p = SubprocessProvider::new(ECHO, Vec::<String>::new());
    let img = Image::from_vec(3, 2, 1, vec![1.5f32, -2.0, 0.0, 9.25, 1e-20, 3.0]).unwrap();
    for _ in 0..3 {
        let back = p.roundtrip(&[Frame::from_image(&img)]).unwrap();
        assert_eq!(back.into_image().unwrap(), img);
    }
    let got = DepthProvider::predict(&mut p, &DepthRequest { view_id: "v", image: &img }).unwrap();
    assert_eq!(got, img);
}

#[test]
fn subprocess_denoiser_speaks_three_frame_requests() {
    let sched = DiffusionSchedule::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let img = random_image(&mut rng, 4, 4, 3);
    let draw = NoiseDraw::sample(&sched, 4, 4, 3, 2, &mut rng);
    let noised = add_noise(&img, &draw, &sched).unwrap();
    let mut p = SubprocessProvider::new(ECHO, ["--frames", "3"]);
    let req = DenoiseRequest {
        view_id: "v",
        noised: &noised,
        t: draw.t,
        alpha_bar: sched.alpha_bar(draw.t),
        conditioning: b"a photo of tissue",
        draw: &draw,
    };
    let pred = Denoiser::predict(&mut p, &req).unwrap();
    let expect: Image<f64> = noised.cast::<f32>().cast();
    assert_eq!(pred, expect);
}

#[test]
fn subprocess_timeout_is_reported() {
    let mut p = SubprocessProvider::new(ECHO, ["--sleep-ms", "3000"]).with_timeout(Duration::from_millis(200));
    let r = p.roundtrip(&[Frame::from_floats(&[1.0])]);
    assert!(matches!(r, Err(Error::ProviderTimeout(_))), "{r:?}");
}

#[test]
fn subprocess_garbage_is_malformed() {
    let mut p = SubprocessProvider::new(ECHO, ["--garbage"]);
    let r = p.roundtrip(&[Frame::from_floats(&[1.0])]);
    assert!(matches!(r, Err(Error::MalformedFrame(_))), "{r:?}");
}

#[test]
fn missing_subprocess_is_unavailable() {
    let mut p = SubprocessProvider::new("/nonexistent/provider-binary", Vec::<String>::new());
    assert!(matches!(p.roundtrip(&[Frame::from_floats(&[1.0])]), Err(Error::PriorUnavailable(_))));
}

fn depth_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..40).prop_flat_map(|n| (prop::collection::vec(-10.0..10.0f64, n), prop::collection::vec(-10.0..10.0f64, n)))
}

fn as_map(v: &[f64]) -> Image<f64> {
    Image::from_vec(v.len(), 1, 1, v.to_vec()).unwrap()
}

proptest! {
    #[test]
    fn pearson_is_symmetric((a, b) in depth_pair()) {
        let ok = vec![true; a.len()];
        if let (Ok(x), Ok(y)) = (pearson_corr(&as_map(&a), &as_map(&b), &ok), pearson_corr(&as_map(&b), &as_map(&a), &ok)) {
            prop_assert!((x - y).abs() < 1e-12);
            prop_assert!(x.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn pearson_is_affine_invariant((a, b) in depth_pair(), scale in 0.01..100.0f64, shift in -50.0..50.0f64) {
        let ok = vec![true; a.len()];
        let warped: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
        if let Ok(x) = pearson_corr(&as_map(&a), &as_map(&b), &ok) {
            let y = pearson_corr(&as_map(&warped), &as_map(&b), &ok).unwrap();
            prop_assert!((x - y).abs() < 1e-10);
        }
    }
}
