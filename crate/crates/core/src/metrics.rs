//! Image quality metrics: MSE, PSNR, SSIM and the L1/SSIM similarity loss.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, shape_err, Result};
use crate::imagegrid::Image;

fn same_shape(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<()> {
    if x.shape() != reference.shape() {
        return Err(shape_err(reference.shape(), x.shape()));
    }
    Ok(())
}

pub fn mse(x: &DMatrix<f64>, reference: &DMatrix<f64>) -> Result<f64> {
    same_shape(x, reference)?;
    Ok((x - reference).norm_squared() / x.len() as f64)
}

/// `10 log₁₀(peak² / MSE)`; `+∞` when the images are identical.
pub fn psnr(x: &DMatrix<f64>, reference: &DMatrix<f64>, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(invalid(format!("peak must be positive, got {peak}")));
    }
    let e = mse(x, reference)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / e).log10()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub c1: f64,
    pub c2: f64,
}

impl SsimParams {
    /// 8×8 windows, `c1 = (0.01 peak)²`, `c2 = (0.03 peak)²`.
    pub fn for_peak(peak: f64) -> Self {
        Self {
            window: 8,
            c1: (0.01 * peak).powi(2),
            c2: (0.03 * peak).powi(2),
        }
    }
}

impl Default for SsimParams {
    fn default() -> Self {
        Self::for_peak(1.0)
    }
}

/// Mean SSIM over all `window × window` positions (stride 1, uniform weights).
pub fn ssim(x: &DMatrix<f64>, reference: &DMatrix<f64>, params: SsimParams) -> Result<f64> {
    same_shape(x, reference)?;
    let (m, n) = x.shape();
    let w = params.window;
    if w == 0 || w > m.min(n) {
        return Err(invalid(format!("SSIM window {w} does not fit a {m}x{n} image")));
    }
    // summed-area tables of x, y, x², y², xy
    let table = |f: &dyn Fn(usize, usize) -> f64| {
        let mut t = DMatrix::zeros(m + 1, n + 1);
        for j in 0..n {
            for i in 0..m {
                t[(i + 1, j + 1)] = f(i, j) + t[(i, j + 1)] + t[(i + 1, j)] - t[(i, j)];
            }
        }
        t
    };
    let sx = table(&|i, j| x[(i, j)]);
    let sy = table(&|i, j| reference[(i, j)]);
    let sxx = table(&|i, j| x[(i, j)] * x[(i, j)]);
    let syy = table(&|i, j| reference[(i, j)] * reference[(i, j)]);
    let sxy = table(&|i, j| x[(i, j)] * reference[(i, j)]);
    let area = (w * w) as f64;
    let boxed = |t: &DMatrix<f64>, i: usize, j: usize| {
        (t[(i + w, j + w)] - t[(i, j + w)] - t[(i + w, j)] + t[(i, j)]) / area
    };
    let mut total = 0.0;
    let mut count = 0usize;
    for j in 0..=n - w {
        for i in 0..=m - w {
            let (mx, my) = (boxed(&sx, i, j), boxed(&sy, i, j));
            let vx = boxed(&sxx, i, j) - mx * mx;
            let vy = boxed(&syy, i, j) - my * my;
            let cov = boxed(&sxy, i, j) - mx * my;
            let num = (2.0 * mx * my + params.c1) * (2.0 * cov + params.c2);
            let den = (mx * mx + my * my + params.c1) * (vx + vy + params.c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// `λ · mean|x̂ − x| + (1 − λ)(1 − SSIM(x̂, x))`.
pub fn similarity_loss(x_hat: &DMatrix<f64>, x: &DMatrix<f64>, lambda: f64, params: SsimParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("similarity weight must lie in [0, 1], got {lambda}")));
    }
    same_shape(x_hat, x)?;
    let l1 = (x_hat - x).abs().sum() / x.len() as f64;
    let s = if lambda == 1.0 { 1.0 } else { ssim(x_hat, x, params)? };
    Ok(lambda * l1 + (1.0 - lambda) * (1.0 - s))
}

/// Default weight of the L1 term in [`similarity_loss`].
pub const DEFAULT_SIMILARITY_WEIGHT: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelQuality {
    pub mse: f64,
    /// `null` in JSON when infinite.
    pub psnr_db: f64,
    pub ssim: f64,
    pub similarity_loss: f64,
}

/// Per-channel metrics plus their unweighted channel mean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityReport {
    pub mse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub similarity_loss: f64,
    pub per_channel: Vec<ChannelQuality>,
}

pub fn quality_report(x: &Image, reference: &Image, peak: f64) -> Result<QualityReport> {
    if x.channel_count() != reference.channel_count() {
        return Err(invalid("channel counts differ"));
    }
    let params = SsimParams::for_peak(peak);
    let per_channel = x
        .channels()
        .iter()
        .zip(reference.channels())
        .map(|(a, r)| {
            // small images fall back to the largest window that fits
            let mut p = params;
            p.window = p.window.min(a.nrows().min(a.ncols()));
            Ok(ChannelQuality {
                mse: mse(a, r)?,
                psnr_db: psnr(a, r, peak)?,
                ssim: ssim(a, r, p)?,
                similarity_loss: similarity_loss(a, r, DEFAULT_SIMILARITY_WEIGHT, p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let c = per_channel.len() as f64;
    let mean = |f: fn(&ChannelQuality) -> f64| per_channel.iter().map(f).sum::<f64>() / c;
    Ok(QualityReport {
        mse: mean(|q| q.mse),
        psnr_db: mean(|q| q.psnr_db),
        ssim: mean(|q| q.ssim),
        similarity_loss: mean(|q| q.similarity_loss),
        per_channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imagegrid::{add_noise, NoiseSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(seed: u64, m: usize, n: usize) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random::<f64>())
    }

    #[test]
    fn identical_images() {
        let x = random(1, 16, 16);
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(ssim(&x, &x, SsimParams::default()).unwrap(), 1.0);
        assert_eq!(similarity_loss(&x, &x, 0.2, SsimParams::default()).unwrap(), 0.0);
    }

    #[test]
    fn uniform_difference_closed_form() {
        let x = random(2, 10, 12);
        let d = 0.05;
        let y = x.add_scalar(d);
        let p = psnr(&y, &x, 1.0).unwrap();
        assert!((p + 20.0 * d.log10()).abs() < 1e-9);
    }

    #[test]
    fn psnr_matches_double_loop_and_is_symmetric() {
        let x = random(3, 9, 7);
        let y = random(4, 9, 7);
        let mut acc = 0.0;
        for i in 0..9 {
            for j in 0..7 {
                acc += (x[(i, j)] - y[(i, j)]).powi(2);
            }
        }
        let oracle = 10.0 * (1.0 / (acc / 63.0)).log10();
        assert!((psnr(&x, &y, 1.0).unwrap() - oracle).abs() < 1e-10);
        assert_eq!(psnr(&x, &y, 1.0).unwrap(), psnr(&y, &x, 1.0).unwrap());
    }

    #[test]
    fn ssim_of_noise_on_constant_reference() {
        let r = DMatrix::from_element(32, 32, 0.5);
        let (x, _) = add_noise(&r, &NoiseSpec::std(0.5, 5)).unwrap();
        assert!(ssim(&x, &r, SsimParams::default()).unwrap() < 0.2);
    }

    #[test]
    fn brightness_shift_lowers_ssim() {
        let r = random(6, 16, 16) * 0.5;
        let x = r.add_scalar(0.1);
        assert!(ssim(&x, &r, SsimParams::default()).unwrap() < 1.0);
    }

    #[test]
    fn window_too_large() {
        let x = random(7, 6, 6);
        assert!(ssim(&x, &x, SsimParams::default()).is_err());
        assert!(psnr(&x, &random(8, 6, 5), 1.0).is_err());
    }

    #[test]
    fn ssim_matches_direct_window_loop() {
        let x = random(9, 11, 10);
        let y = random(10, 11, 10);
        let p = SsimParams::default();
        let mut total = 0.0;
        let mut count = 0.0;
        for i in 0..=3 {
            for j in 0..=2 {
                let wx = x.view((i, j), (8, 8));
                let wy = y.view((i, j), (8, 8));
                let (mx, my) = (wx.mean(), wy.mean());
                let vx = wx.map(|v| (v - mx).powi(2)).mean();
                let vy = wy.map(|v| (v - my).powi(2)).mean();
                let cov = wx.zip_map(&wy, |a, b| (a - mx) * (b - my)).mean();
                total += (2.0 * mx * my + p.c1) * (2.0 * cov + p.c2)
                    / ((mx * mx + my * my + p.c1) * (vx + vy + p.c2));
                count += 1.0;
            }
        }
        assert!((ssim(&x, &y, p).unwrap() - total / count).abs() < 1e-12);
    }

    #[test]
    fn similarity_loss_weights() {
        let x = random(11, 12, 12);
        let y = random(12, 12, 12);
        let l1 = (&x - &y).abs().mean();
        assert!((similarity_loss(&x, &y, 1.0, SsimParams::default()).unwrap() - l1).abs() < 1e-15);
        let s = ssim(&x, &y, SsimParams::default()).unwrap();
        let expected = 0.2 * l1 + 0.8 * (1.0 - s);
        assert!((similarity_loss(&x, &y, 0.2, SsimParams::default()).unwrap() - expected).abs() < 1e-10);
        assert!(similarity_loss(&x, &y, 1.5, SsimParams::default()).is_err());
    }

    #[test]
    fn psnr_falls_with_noise_level() {
        let r = random(13, 24, 24);
        let mut last = f64::INFINITY;
        for eta in [0.01, 0.02, 0.05, 0.1, 0.2] {
            let mean: f64 = (0..10)
                .map(|s| psnr(&add_noise(&r, &NoiseSpec::std(eta, s)).unwrap().0, &r, 1.0).unwrap())
                .sum::<f64>()
                / 10.0;
            assert!(mean < last);
            last = mean;
        }
    }

    #[test]
    fn report_json_keys() {
        let x = Image::gray(random(14, 10, 10)).unwrap();
        let r = quality_report(&x, &x, 1.0).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        for key in ["mse", "psnr_db", "ssim", "similarity_loss", "per_channel"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v["psnr_db"].is_null());
    }
}
