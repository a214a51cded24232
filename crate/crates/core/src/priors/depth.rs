use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::math::Real;

/// Denominator guard for the correlation.
pub const CORR_EPS: f64 = 1e-8;

/// Min-max normalized copy of the valid entries (`None` if fewer than two
/// valid pixels or zero range), plus the range used.
fn normalized_valid<T: Real>(d: &Image<T>, valid: &[bool]) -> Result<(Vec<f64>, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut n = 0;
    for (&v, &ok) in d.data.iter().zip(valid) {
        if ok {
            let v = v.as_f64();
            if !v.is_finite() {
                return Err(Error::NumericalDegeneracy("non-finite depth value".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
            n += 1;
        }
    }
    if n < 2 {
        return Err(Error::DegenerateStatistics(format!("{n} valid pixels")));
    }
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::DegenerateStatistics("zero variance".into()));
    }
    let vals = d
        .data
        .iter()
        .zip(valid)
        .filter(|(_, &ok)| ok)
        .map(|(&v, _)| (v.as_f64() - lo) / range)
        .collect();
    Ok((vals, range))
}

struct CorrStats {
    corr: f64,
    /// Centered normalized values of the first map.
    a: Vec<f64>,
    b: Vec<f64>,
    s_aa: f64,
    denom: f64,
    range_a: f64,
}

fn corr_stats<T: Real, U: Real>(a: &Image<T>, b: &Image<U>, valid: &[bool]) -> Result<CorrStats> {
    if a.width != b.width || a.height != b.height || a.channels != 1 || b.channels != 1 {
        return Err(Error::Shape("depth maps must be single-channel and the same size".into()));
    }
    if valid.len() != a.data.len() {
        return Err(Error::Shape("validity map size differs from depth".into()));
    }
    let (mut xa, range_a) = normalized_valid(a, valid)?;
    let (mut xb, _) = normalized_valid(b, valid)?;
    let n = xa.len() as f64;
    let ma = xa.iter().sum::<f64>() / n;
    let mb = xb.iter().sum::<f64>() / n;
    xa.iter_mut().for_each(|v| *v -= ma);
    xb.iter_mut().for_each(|v| *v -= mb);
    let s_ab: f64 = xa.iter().zip(&xb).map(|(x, y)| x * y).sum();
    let s_aa: f64 = xa.iter().map(|x| x * x).sum();
    let s_bb: f64 = xb.iter().map(|x| x * x).sum();
    let denom = (s_aa * s_bb).sqrt().max(CORR_EPS);
    Ok(CorrStats {
        corr: s_ab / denom,
        a: xa,
        b: xb,
        s_aa,
        denom,
        range_a,
    })
}

/// Sample Pearson correlation over the valid pixels of two depth maps, each
/// min-max normalized over those pixels first. Fewer than two valid pixels or
/// a constant map gives [`Error::DegenerateStatistics`].
pub fn pearson_corr<T: Real, U: Real>(a: &Image<T>, b: &Image<U>, valid: &[bool]) -> Result<f64> {
    Ok(corr_stats(a, b, valid)?.corr)
}

#[derive(Debug, Clone)]
pub struct GeoLoss<T> {
    pub loss: f64,
    pub corr: f64,
    /// `dloss/dD̂`, zero outside the valid set.
    pub grad: Image<T>,
    /// Statistics were degenerate; loss and gradient are zero.
    pub degenerate: bool,
}

/// `|1 − corr(D̂, D̃)|` with its gradient w.r.t. `D̂`.
pub fn geo_loss<T: Real, U: Real>(rendered: &Image<T>, prior: &Image<U>, valid: &[bool]) -> Result<GeoLoss<T>> {
    let mut grad = Image::zeros(rendered.width, rendered.height, 1);
    let st = match corr_stats(rendered, prior, valid) {
        Ok(st) => st,
        Err(Error::DegenerateStatistics(msg)) => {
            log::debug!("geometric loss skipped: {msg}");
            return Ok(GeoLoss {
                loss: 0.0,
                corr: 0.0,
                grad,
                degenerate: true,
            });
        }
        Err(e) => return Err(e),
    };
    let one_minus = 1.0 - st.corr;
    let sign = if one_minus > 0.0 {
        1.0
    } else if one_minus < 0.0 {
        -1.0
    } else {
        0.0
    };
    // d corr / d a_i = b_i / denom − corr · a_i / S_aa (centered values), then
    // the normalization's 1/range.
    let mut k = 0;
    for (g, &ok) in grad.data.iter_mut().zip(valid) {
        if ok {
            let dcorr = st.b[k] / st.denom - st.corr * st.a[k] / st.s_aa;
            *g = T::lit(-sign * dcorr / st.range_a);
            k += 1;
        }
    }
    Ok(GeoLoss {
        loss: one_minus.abs(),
        corr: st.corr,
        grad,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> Image<f64> {
        Image::from_vec(v.len(), 1, 1, v.to_vec()).unwrap()
    }

    #[test]
    fn self_and_affine_correlation_is_one() {
        let a = map(&[0.3, 1.7, 2.2, 0.9, 5.0]);
        let ok = vec![true; 5];
        assert_eq!(pearson_corr(&a, &a, &ok).unwrap(), 1.0);
        let b = map(&a.data.iter().map(|v| 2.0 * v + 5.0).collect::<Vec<_>>());
        assert!((pearson_corr(&a, &b, &ok).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn reversed_ramp_is_minus_one() {
        let ok = vec![true; 4];
        let c = pearson_corr(&map(&[1.0, 2.0, 3.0, 4.0]), &map(&[4.0, 3.0, 2.0, 1.0]), &ok).unwrap();
        assert!((c + 1.0).abs() < 1e-15);
        let g = geo_loss(&map(&[1.0, 2.0, 3.0, 4.0]), &map(&[4.0, 3.0, 2.0, 1.0]), &ok).unwrap();
        assert!((g.loss - 2.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_inputs() {
        let ok = vec![true; 3];
        assert!(matches!(
            pearson_corr(&map(&[1.0, 1.0, 1.0]), &map(&[1.0, 2.0, 3.0]), &ok),
            Err(Error::DegenerateStatistics(_))
        ));
        assert!(matches!(
            pearson_corr(&map(&[1.0, 2.0, 3.0]), &map(&[1.0, 2.0, 3.0]), &[true, false, false]),
            Err(Error::DegenerateStatistics(_))
        ));
        let g = geo_loss(&map(&[1.0, 1.0, 1.0]), &map(&[1.0, 2.0, 3.0]), &ok).unwrap();
        assert!(g.degenerate && g.loss == 0.0 && g.grad.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_pixels_are_ignored() {
        let a = map(&[1.0, 2.0, 100.0, 3.0]);
        let b = map(&[2.0, 4.0, -50.0, 6.0]);
        let ok = [true, true, false, true];
        assert!((pearson_corr(&a, &b, &ok).unwrap() - 1.0).abs() < 1e-14);
        let g = geo_loss(&map(&[1.0, 2.5, 100.0, 3.0]), &b, &ok).unwrap();
        assert_eq!(g.grad.data[2], 0.0);
    }
}
