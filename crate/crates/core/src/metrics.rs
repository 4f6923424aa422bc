//! Distortion and spectral-fidelity metrics.

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::cube::SpectralCube;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

/// PSNR on raw `f64` samples. Cube data is stored as `f32`, so this is the
/// entry point when offsets must be exact in double precision.
pub fn psnr_slices(xhat: &[f64], x: &[f64], peak: f64) -> Result<f64> {
    if xhat.len() != x.len() {
        return Err(Error::shape(x.len(), xhat.len()));
    }
    let sum: f64 = xhat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    let mse = sum / x.len().max(1) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Peak signal-to-noise ratio in dB; `+∞` when the cubes are identical.
pub fn psnr(xhat: &SpectralCube, x: &SpectralCube, peak: f64) -> Result<f64> {
    xhat.check_same_shape(x)?;
    psnr_slices(&to_f64(xhat.data()), &to_f64(x.data()), peak)
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let w: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - r).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian filtering over the valid region only.
fn filter_valid(x: &[f64], height: usize, width: usize, window: &[f64]) -> Vec<f64> {
    let k = window.len();
    let (oh, ow) = (height + 1 - k, width + 1 - k);
    let mut rows = vec![0.0; height * ow];
    for h in 0..height {
        for w in 0..ow {
            rows[h * ow + w] = (0..k).map(|t| window[t] * x[h * width + w + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for h in 0..oh {
        for w in 0..ow {
            out[h * ow + w] = (0..k).map(|t| window[t] * rows[(h + t) * ow + w]).sum();
        }
    }
    out
}

fn ssim_band(
    a: &[f64],
    b: &[f64],
    height: usize,
    width: usize,
    peak: f64,
    window: &[f64],
) -> (f64, usize) {
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let product =
        |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mu_a = filter_valid(a, height, width, window);
    let mu_b = filter_valid(b, height, width, window);
    let aa = filter_valid(&product(a, a), height, width, window);
    let bb = filter_valid(&product(b, b), height, width, window);
    let ab = filter_valid(&product(a, b), height, width, window);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = aa[i] - ma * ma;
        let vb = bb[i] - mb * mb;
        let cov = ab[i] - ma * mb;
        sum +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    (sum, mu_a.len())
}

/// Mean structural similarity over bands and valid window positions.
pub fn ssim(xhat: &SpectralCube, x: &SpectralCube, peak: f64) -> Result<f64> {
    xhat.check_same_shape(x)?;
    let (h, w) = (x.height(), x.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    let window = gaussian_window();
    let parts: Vec<(f64, usize)> = (0..x.channels())
        .into_par_iter()
        .map(|b| {
            let a: Vec<f64> = xhat.band(b).iter().map(|&v| v as f64).collect();
            let g: Vec<f64> = x.band(b).iter().map(|&v| v as f64).collect();
            ssim_band(&a, &g, h, w, peak, &window)
        })
        .collect();
    let (sum, count) = parts
        .iter()
        .fold((0.0, 0), |(s, c), (ps, pc)| (s + ps, c + pc));
    Ok(sum / count as f64)
}

/// Angle between two vectors as `2·atan2(‖â - b̂‖, ‖â + b̂‖)`, which stays
/// accurate near 0 and π where `acos` of the normalized dot product does not.
fn angle(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    let (mut diff, mut sum) = (0.0f64, 0.0f64);
    for (u, v) in a.iter().zip(b) {
        let (p, q) = (u / na, v / nb);
        diff += (p - q) * (p - q);
        sum += (p + q) * (p + q);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Angle between two spectra in radians; `None` if either norm is below
/// `1e-12`.
pub fn spectral_angle(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|t| t * t).sum::<f64>().sqrt();
    let nb = b.iter().map(|t| t * t).sum::<f64>().sqrt();
    if na < 1e-12 || nb < 1e-12 {
        return None;
    }
    Some(angle(a, b, na, nb))
}

/// Mean spectral angle in radians over pixels with non-degenerate spectra.
pub fn sam(xhat: &SpectralCube, x: &SpectralCube) -> Result<f64> {
    xhat.check_same_shape(x)?;
    let plane = x.pixels();
    let channels = x.channels();
    let (a, b) = (xhat.data(), x.data());
    let (mut u, mut v) = (vec![0.0f64; channels], vec![0.0f64; channels]);
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in 0..plane {
        for c in 0..channels {
            u[c] = a[c * plane + p] as f64;
            v[c] = b[c * plane + p] as f64;
        }
        if let Some(t) = spectral_angle(&u, &v) {
            sum += t;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::DegenerateSpectra);
    }
    Ok(sum / count as f64)
}

/// `100·ratio·sqrt(mean_b (RMSE_b / μ_b)²)`; bands whose ground-truth mean
/// is zero are skipped.
pub fn ergas(xhat: &SpectralCube, x: &SpectralCube, ratio: f64) -> Result<f64> {
    xhat.check_same_shape(x)?;
    let n = x.pixels() as f64;
    let mut acc = 0.0;
    let mut used = 0usize;
    for b in 0..x.channels() {
        let g = x.band(b);
        let mu = g.iter().map(|&v| v as f64).sum::<f64>() / n;
        if mu == 0.0 {
            warn!("band {b} has zero mean; skipped in ERGAS");
            continue;
        }
        let mse = xhat
            .band(b)
            .iter()
            .zip(g)
            .map(|(&p, &q)| (p as f64 - q as f64).powi(2))
            .sum::<f64>()
            / n;
        acc += mse / (mu * mu);
        used += 1;
    }
    if used == 0 {
        return Err(Error::ZeroMeanBands);
    }
    Ok(100.0 * ratio * (acc / used as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub sam: f64,
    pub ergas: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricConfig {
    pub peak: f64,
    pub ergas_ratio: f64,
}

impl MetricConfig {
    /// Peak 1 and ERGAS ratio `1/period`.
    pub fn for_period(period: usize) -> Self {
        Self {
            peak: 1.0,
            ergas_ratio: 1.0 / period.max(1) as f64,
        }
    }
}

pub fn evaluate(xhat: &SpectralCube, x: &SpectralCube, cfg: &MetricConfig) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(xhat, x, cfg.peak)?,
        ssim: ssim(xhat, x, cfg.peak)?,
        sam: sam(xhat, x)?,
        ergas: ergas(xhat, x, cfg.ergas_ratio)?,
    })
}

/// Formats a metric value, spelling infinities as `inf`.
pub fn format_value(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.6}")
    }
}
