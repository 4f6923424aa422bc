//! Anisotropic total-variation demosaicing by proximal gradient descent.
//!
//! `TV(x) = Σ_b Σ_p |x_b(p + e_h) - x_b(p)| + |x_b(p + e_w) - x_b(p)|` with
//! forward differences that vanish at the far edges. The prox of `w·TV` is
//! solved per band on its dual with a fast projected gradient iteration,
//! warm-started across outer iterations.

use rayon::prelude::*;

use crate::cube::{Mosaic, SpectralCube};
use crate::error::{Error, Result};
use crate::interp::{gaussian_demosaic, InterpConfig, InterpMethod};
use crate::msfa::MosaicOperator;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TvConfig {
    pub lambda: f64,
    /// Gradient step; at most 1 because `‖AᵀA‖ = 1`.
    pub step: f64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    /// Stop when the relative objective change drops below this.
    pub tol: f64,
}

impl Default for TvConfig {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            step: 1.0,
            outer_iters: 300,
            inner_iters: 20,
            tol: 1e-6,
        }
    }
}

impl TvConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step must lie in (0, 1], got {}",
                self.step
            )));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidArgument(
                "iteration counts must be >= 1".into(),
            ));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

fn plane_tv(x: &[f64], height: usize, width: usize) -> f64 {
    let mut acc = 0.0;
    for h in 0..height {
        for w in 0..width {
            let i = h * width + w;
            if h + 1 < height {
                acc += (x[i + width] - x[i]).abs();
            }
            if w + 1 < width {
                acc += (x[i + 1] - x[i]).abs();
            }
        }
    }
    acc
}

pub fn tv_seminorm(x: &SpectralCube) -> f64 {
    let (h, w) = (x.height(), x.width());
    (0..x.channels())
        .map(|b| {
            let band: Vec<f64> = x.band(b).iter().map(|&v| v as f64).collect();
            plane_tv(&band, h, w)
        })
        .sum()
}

/// `D x` into `(gh, gw)`.
fn gradient(x: &[f64], gh: &mut [f64], gw: &mut [f64], height: usize, width: usize) {
    for h in 0..height {
        for w in 0..width {
            let i = h * width + w;
            gh[i] = if h + 1 < height {
                x[i + width] - x[i]
            } else {
                0.0
            };
            gw[i] = if w + 1 < width { x[i + 1] - x[i] } else { 0.0 };
        }
    }
}

/// `Dᵀ (ph, pw)` into `out`.
fn gradient_adjoint(ph: &[f64], pw: &[f64], out: &mut [f64], height: usize, width: usize) {
    for h in 0..height {
        for w in 0..width {
            let i = h * width + w;
            let mut v = 0.0;
            if h + 1 < height {
                v -= ph[i];
            }
            if h > 0 {
                v += ph[i - width];
            }
            if w + 1 < width {
                v -= pw[i];
            }
            if w > 0 {
                v += pw[i - 1];
            }
            out[i] = v;
        }
    }
}

/// Dual variables of one band's prox problem.
#[derive(Clone, Debug)]
struct DualState {
    ph: Vec<f64>,
    pw: Vec<f64>,
}

impl DualState {
    fn new(plane: usize) -> Self {
        Self {
            ph: vec![0.0; plane],
            pw: vec![0.0; plane],
        }
    }
}

/// `z = argmin ½‖z - v‖² + weight·TV(z)` for one band, `iters` fast
/// projected-gradient steps on the dual starting from `dual`.
fn prox_plane(
    v: &[f64],
    weight: f64,
    iters: usize,
    dual: &mut DualState,
    out: &mut [f64],
    height: usize,
    width: usize,
) {
    if weight <= 0.0 {
        out.copy_from_slice(v);
        return;
    }
    let plane = v.len();
    // ‖D‖² ≤ 8 for 2-D forward differences
    let rate = 1.0 / (8.0 * weight);
    let (mut rh, mut rw) = (dual.ph.clone(), dual.pw.clone());
    let mut z = vec![0.0; plane];
    let (mut gh, mut gw) = (vec![0.0; plane], vec![0.0; plane]);
    let mut t = 1.0f64;
    for _ in 0..iters {
        gradient_adjoint(&rh, &rw, &mut z, height, width);
        for (zi, &vi) in z.iter_mut().zip(v) {
            *zi = vi - weight * *zi;
        }
        gradient(&z, &mut gh, &mut gw, height, width);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        for (p, (r, g)) in dual.ph.iter_mut().zip(rh.iter_mut().zip(&gh)) {
            let p_next = (*r + rate * g).clamp(-1.0, 1.0);
            *r = p_next + momentum * (p_next - *p);
            *p = p_next;
        }
        for (p, (r, g)) in dual.pw.iter_mut().zip(rw.iter_mut().zip(&gw)) {
            let p_next = (*r + rate * g).clamp(-1.0, 1.0);
            *r = p_next + momentum * (p_next - *p);
            *p = p_next;
        }
        t = t_next;
    }
    gradient_adjoint(&dual.ph, &dual.pw, out, height, width);
    for (o, &vi) in out.iter_mut().zip(v) {
        *o = vi - weight * *o;
    }
}

fn to_f64(x: &[f32]) -> Vec<f64> {
    x.iter().map(|&v| v as f64).collect()
}

/// Approximate prox of `weight·TV`, band by band, from a cold start.
pub fn tv_prox(x: &SpectralCube, weight: f64, inner_iters: usize) -> SpectralCube {
    let (h, w) = (x.height(), x.width());
    let plane = h * w;
    let mut out = x.clone();
    if weight <= 0.0 {
        return out;
    }
    out.data_mut()
        .par_chunks_mut(plane.max(1))
        .enumerate()
        .for_each(|(b, dst)| {
            let v = to_f64(x.band(b));
            let mut z = vec![0.0; plane];
            prox_plane(
                &v,
                weight,
                inner_iters,
                &mut DualState::new(plane),
                &mut z,
                h,
                w,
            );
            for (d, s) in dst.iter_mut().zip(&z) {
                *d = *s as f32;
            }
        });
    out
}

/// Iterate, objective per iteration (index 0 is the initialization).
#[derive(Clone, Debug)]
pub struct TvResult {
    pub cube: SpectralCube,
    pub objectives: Vec<f64>,
    pub iterations: usize,
}

/// Working state for one band during the outer loop.
struct Band {
    x: Vec<f64>,
    dual: DualState,
}

/// `½‖z - v‖² + weight·TV(z)` for one band.
fn prox_objective(z: &[f64], v: &[f64], weight: f64, height: usize, width: usize) -> f64 {
    let fit: f64 = z.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + weight * plane_tv(z, height, width)
}

/// Doubles the inner budget this many times before giving up on a step.
const MAX_PROX_RETRIES: usize = 6;

/// Runs the proximal gradient iteration and reports the objective trace.
pub fn tv_demosaic_traced(y: &Mosaic, op: &MosaicOperator, cfg: &TvConfig) -> Result<TvResult> {
    cfg.validate()?;
    if y.shape() != (op.height(), op.width()) {
        return Err(Error::shape(
            format!("{}x{}", op.height(), op.width()),
            format!("{}x{}", y.height(), y.width()),
        ));
    }
    let (h, w) = y.shape();
    let plane = h * w;
    let channels = op.channels();
    let init = gaussian_demosaic(
        y,
        op.pattern(),
        &InterpConfig::new(InterpMethod::Gaussian, op.pattern().period()),
    )?;
    let yd = to_f64(y.data());
    // band index sampled at each pixel
    let sampled: Vec<usize> = (0..plane)
        .map(|i| op.pattern().band_at(i / w, i % w))
        .collect();
    let mut bands: Vec<Band> = (0..channels)
        .map(|b| Band {
            x: to_f64(init.band(b)),
            dual: DualState::new(plane),
        })
        .collect();

    let objective = |bands: &[Band]| -> f64 {
        let fit: f64 = (0..plane)
            .map(|i| {
                let r = bands[sampled[i]].x[i] - yd[i];
                r * r
            })
            .sum();
        let tv: f64 = bands.iter().map(|b| plane_tv(&b.x, h, w)).sum();
        0.5 * fit + cfg.lambda * tv
    };

    let weight = cfg.step * cfg.lambda;
    let initial = objective(&bands);
    let mut objectives = vec![initial];
    let mut iterations = 0;
    for iter in 1..=cfg.outer_iters {
        bands.par_iter_mut().enumerate().for_each(|(b, band)| {
            // v = x - τ Aᵀ(Ax - y)
            let mut v = band.x.clone();
            for i in 0..plane {
                if sampled[i] == b {
                    v[i] -= cfg.step * (band.x[i] - yd[i]);
                }
            }
            let current = prox_objective(&band.x, &v, weight, h, w);
            let mut z = vec![0.0; plane];
            let mut budget = cfg.inner_iters;
            for attempt in 0..=MAX_PROX_RETRIES {
                prox_plane(&v, weight, budget, &mut band.dual, &mut z, h, w);
                if prox_objective(&z, &v, weight, h, w) <= current {
                    band.x.copy_from_slice(&z);
                    return;
                }
                if attempt == MAX_PROX_RETRIES {
                    break;
                }
                budget *= 2;
            }
            // inexact prox would increase the objective; keep the iterate
        });
        let f = objective(&bands);
        iterations = iter;
        if !f.is_finite() || f > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Diverged {
                iter,
                objective: f,
                initial,
            });
        }
        let prev = *objectives.last().unwrap();
        objectives.push(f);
        if (prev - f).abs() <= cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let mut data = Vec::with_capacity(plane * channels);
    for b in &bands {
        data.extend(b.x.iter().map(|&v| v as f32));
    }
    Ok(TvResult {
        cube: SpectralCube::from_vec(h, w, channels, data)?,
        objectives,
        iterations,
    })
}

pub fn tv_demosaic(y: &Mosaic, op: &MosaicOperator, cfg: &TvConfig) -> Result<SpectralCube> {
    tv_demosaic_traced(y, op, cfg).map(|r| r.cube)
}
