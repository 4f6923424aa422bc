//! Classical interpolation baselines built on normalized convolution.
//!
//! Every method splits the mosaic into sparse per-band planes `s_b` with
//! sample masks `m_b` and estimates band `b` as `(K * s_b) / (K * m_b)`,
//! where `*` is 2-D correlation with symmetric boundary reflection. The
//! denominator depends only on the pattern, so each interpolator is a fixed
//! linear map of the mosaic; [`NormalizedConvolution`] exposes that map and
//! its adjoint for gradient propagation.

use log::warn;
use num_traits::Float;

use crate::cube::{Mosaic, SpectralCube, ValidityMask};
use crate::error::{Error, Result};
use crate::msfa::{MosaicOperator, MsfaPattern};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InterpMethod {
    Bilinear,
    WeightedBilinear,
    Gaussian,
}

impl InterpMethod {
    pub fn default_kernel_size(self) -> usize {
        match self {
            InterpMethod::Bilinear => 5,
            InterpMethod::WeightedBilinear => 7,
            InterpMethod::Gaussian => 9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InterpConfig {
    pub method: InterpMethod,
    pub kernel_size: usize,
    pub gaussian_sigma: f64,
}

impl InterpConfig {
    /// Default kernel size for the method, Gaussian sigma `c / 2`.
    pub fn new(method: InterpMethod, period: usize) -> Self {
        Self {
            method,
            kernel_size: method.default_kernel_size(),
            gaussian_sigma: (period as f64 / 2.0).max(0.5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.kernel_size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "kernel size must be odd, got {}",
                self.kernel_size
            )));
        }
        if !(self.gaussian_sigma > 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian sigma must be positive, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }
}

/// Square correlation kernel with non-negative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2d {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel2d {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) || weights.len() != size * size {
            return Err(Error::InvalidArgument(format!(
                "kernel must be odd-sized square, got size {size} with {} weights",
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidArgument(
                "kernel weights must be finite and >= 0".into(),
            ));
        }
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidArgument("kernel is identically zero".into()));
        }
        Ok(Self { size, weights })
    }

    fn separable(profile: &[f64]) -> Self {
        let size = profile.len();
        let mut weights = Vec::with_capacity(size * size);
        for a in profile {
            for b in profile {
                weights.push(a * b);
            }
        }
        Self { size, weights }
    }

    /// Separable triangle of width `size`: `1 - |i| / (r + 1)` with
    /// `r = size / 2`. With `r + 1 = c` this is exact bilinear interpolation
    /// between samples `c` pixels apart.
    pub fn tent(size: usize) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "tent width must be odd, got {size}"
            )));
        }
        let r = (size / 2) as f64;
        let profile: Vec<f64> = (0..size)
            .map(|i| 1.0 - (i as f64 - r).abs() / (r + 1.0))
            .collect();
        Ok(Self::separable(&profile))
    }

    pub fn gaussian(size: usize, sigma: f64) -> Result<Self> {
        if size.is_multiple_of(2) || !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gaussian kernel needs odd size and sigma > 0, got {size}, {sigma}"
            )));
        }
        let r = (size / 2) as f64;
        let profile: Vec<f64> = (0..size)
            .map(|i| {
                let d = i as f64 - r;
                (-0.5 * d * d / (sigma * sigma)).exp()
            })
            .collect();
        Ok(Self::separable(&profile))
    }

    pub fn ones(size: usize) -> Result<Self> {
        Self::new(size, vec![1.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, dy: usize, dx: usize) -> f64 {
        self.weights[dy * self.size + dx]
    }
}

/// Symmetric (half-sample) reflection of `i` into `[0, n)`.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Per-offset reflected indices: `table[p * size + t] = reflect(p + t - r)`.
fn reflect_table(n: usize, size: usize) -> Vec<usize> {
    let r = (size / 2) as isize;
    let mut table = Vec::with_capacity(n * size);
    for p in 0..n as isize {
        for t in 0..size as isize {
            table.push(reflect(p + t - r, n));
        }
    }
    table
}

/// 2-D correlation of one plane with symmetric padding.
pub fn correlate_plane<T: Float>(
    src: &[T],
    dst: &mut [T],
    height: usize,
    width: usize,
    kernel: &Kernel2d,
) {
    let k = kernel.size();
    let rows = reflect_table(height, k);
    let cols = reflect_table(width, k);
    let weights: Vec<T> = kernel
        .weights()
        .iter()
        .map(|&w| T::from(w).unwrap())
        .collect();
    for h in 0..height {
        for w in 0..width {
            let mut acc = T::zero();
            for dy in 0..k {
                let sr = rows[h * k + dy] * width;
                for dx in 0..k {
                    acc = acc + weights[dy * k + dx] * src[sr + cols[w * k + dx]];
                }
            }
            dst[h * width + w] = acc;
        }
    }
}

/// Adjoint of [`correlate_plane`]; accumulates into `dst`.
pub fn correlate_plane_adjoint<T: Float>(
    src: &[T],
    dst: &mut [T],
    height: usize,
    width: usize,
    kernel: &Kernel2d,
) {
    let k = kernel.size();
    let rows = reflect_table(height, k);
    let cols = reflect_table(width, k);
    let weights: Vec<T> = kernel
        .weights()
        .iter()
        .map(|&w| T::from(w).unwrap())
        .collect();
    for h in 0..height {
        for w in 0..width {
            let g = src[h * width + w];
            if g == T::zero() {
                continue;
            }
            for dy in 0..k {
                let sr = rows[h * k + dy] * width;
                for dx in 0..k {
                    let i = sr + cols[w * k + dx];
                    dst[i] = dst[i] + weights[dy * k + dx] * g;
                }
            }
        }
    }
}

/// Splits a mosaic into sparse band planes and their sample masks.
pub fn sparse_band_split(y: &Mosaic, pattern: &MsfaPattern) -> (SpectralCube, Vec<ValidityMask>) {
    let op = MosaicOperator::new(pattern.clone(), y.height(), y.width());
    let sparse = op.adjoint(y).expect("operator built for this mosaic");
    let masks = (0..pattern.channels()).map(|b| op.band_mask(b)).collect();
    (sparse, masks)
}

/// The linear map `y -> (K * s_b) / (K * m_b)` for a fixed size and pattern.
#[derive(Clone, Debug)]
pub struct NormalizedConvolution {
    op: MosaicOperator,
    kernel: Kernel2d,
    inv_den: Vec<f64>,
}

impl NormalizedConvolution {
    pub fn new(op: &MosaicOperator, kernel: Kernel2d) -> Result<Self> {
        let (height, width) = (op.height(), op.width());
        let plane = height * width;
        let channels = op.channels();
        let mut inv_den = vec![0.0f64; plane * channels];
        let mut den = vec![0.0f64; plane];
        for b in 0..channels {
            let mask: Vec<f64> = op
                .band_mask(b)
                .data()
                .iter()
                .map(|&m| if m { 1.0 } else { 0.0 })
                .collect();
            correlate_plane(&mask, &mut den, height, width, &kernel);
            for (i, &d) in den.iter().enumerate() {
                if d <= 0.0 {
                    return Err(Error::KernelTooSmall {
                        band: b,
                        row: i / width.max(1),
                        col: i % width.max(1),
                    });
                }
                inv_den[b * plane + i] = 1.0 / d;
            }
        }
        Ok(Self {
            op: op.clone(),
            kernel,
            inv_den,
        })
    }

    pub fn operator(&self) -> &MosaicOperator {
        &self.op
    }

    pub fn kernel(&self) -> &Kernel2d {
        &self.kernel
    }

    pub fn apply(&self, y: &Mosaic) -> Result<SpectralCube> {
        if y.shape() != (self.op.height(), self.op.width()) {
            return Err(Error::shape(
                format!("{}x{}", self.op.height(), self.op.width()),
                format!("{}x{}", y.height(), y.width()),
            ));
        }
        let mut out = vec![0.0f32; y.data().len() * self.op.channels()];
        self.apply_slice(y.data(), &mut out);
        SpectralCube::from_vec(y.height(), y.width(), self.op.channels(), out)
    }

    /// Interpolates only the samples of band `band` into `out` (one plane).
    fn band_from_sparse<T: Float>(&self, sparse_band: &[T], band: usize, out: &mut [T]) {
        let (height, width) = (self.op.height(), self.op.width());
        let plane = height * width;
        correlate_plane(sparse_band, out, height, width, &self.kernel);
        let inv = &self.inv_den[band * plane..(band + 1) * plane];
        for (o, &d) in out.iter_mut().zip(inv) {
            *o = *o * T::from(d).unwrap();
        }
    }

    pub fn apply_slice<T: Float>(&self, y: &[T], out: &mut [T]) {
        let plane = self.op.height() * self.op.width();
        let mut sparse = vec![T::zero(); plane * self.op.channels()];
        self.op.adjoint_slice(y, &mut sparse);
        for (b, (src, dst)) in sparse.chunks(plane).zip(out.chunks_mut(plane)).enumerate() {
            self.band_from_sparse(src, b, dst);
        }
    }

    /// Adjoint map: cube gradient -> mosaic gradient (overwrites `out`).
    pub fn adjoint_slice<T: Float>(&self, g: &[T], out: &mut [T]) {
        let (height, width) = (self.op.height(), self.op.width());
        let plane = height * width;
        let mut sparse = vec![T::zero(); plane * self.op.channels()];
        for b in 0..self.op.channels() {
            let scaled: Vec<T> = g[b * plane..(b + 1) * plane]
                .iter()
                .zip(&self.inv_den[b * plane..(b + 1) * plane])
                .map(|(&v, &d)| v * T::from(d).unwrap())
                .collect();
            correlate_plane_adjoint(
                &scaled,
                &mut sparse[b * plane..(b + 1) * plane],
                height,
                width,
                &self.kernel,
            );
        }
        self.op.apply_slice(&sparse, out);
    }
}

/// Normalized-convolution demosaic with an explicit kernel.
pub fn normalized_convolution_demosaic(
    y: &Mosaic,
    pattern: &MsfaPattern,
    kernel: &Kernel2d,
) -> Result<SpectralCube> {
    let op = MosaicOperator::new(pattern.clone(), y.height(), y.width());
    NormalizedConvolution::new(&op, kernel.clone())?.apply(y)
}

/// Smallest odd width whose reach covers a full period on both sides.
fn min_tent_width(period: usize) -> usize {
    (2 * period).saturating_sub(1).max(1)
}

fn tent_for(cfg: &InterpConfig, period: usize) -> Result<Kernel2d> {
    cfg.validate()?;
    let min = min_tent_width(period);
    let size = if cfg.kernel_size < min {
        warn!(
            "{}x{} tent cannot reach every sample of a period-{period} pattern; using {min}x{min}",
            cfg.kernel_size, cfg.kernel_size
        );
        min
    } else {
        cfg.kernel_size
    };
    Kernel2d::tent(size)
}

pub fn bilinear_demosaic(
    y: &Mosaic,
    pattern: &MsfaPattern,
    cfg: &InterpConfig,
) -> Result<SpectralCube> {
    let kernel = tent_for(cfg, pattern.period())?;
    normalized_convolution_demosaic(y, pattern, &kernel)
}

pub fn gaussian_kernel(cfg: &InterpConfig) -> Result<Kernel2d> {
    cfg.validate()?;
    Kernel2d::gaussian(cfg.kernel_size, cfg.gaussian_sigma)
}

pub fn gaussian_demosaic(
    y: &Mosaic,
    pattern: &MsfaPattern,
    cfg: &InterpConfig,
) -> Result<SpectralCube> {
    normalized_convolution_demosaic(y, pattern, &gaussian_kernel(cfg)?)
}

/// Band used as the spatial guide in [`weighted_bilinear_demosaic`].
pub const REFERENCE_BAND: usize = 0;

/// Spectral-difference interpolation.
///
/// 1. bilinear estimate of every band;
/// 2. at the samples of band `b`, difference `y - ref_estimate`;
/// 3. normalized-convolution interpolation of the differences;
/// 4. `x_b = ref_estimate + interpolated difference`.
pub fn weighted_bilinear_demosaic(
    y: &Mosaic,
    pattern: &MsfaPattern,
    cfg: &InterpConfig,
) -> Result<SpectralCube> {
    let kernel = tent_for(cfg, pattern.period())?;
    let op = MosaicOperator::new(pattern.clone(), y.height(), y.width());
    let nc = NormalizedConvolution::new(&op, kernel)?;
    let estimate = nc.apply(y)?;
    let reference = estimate.band(REFERENCE_BAND).to_vec();
    let diff = Mosaic::from_vec(
        y.height(),
        y.width(),
        y.data()
            .iter()
            .zip(&reference)
            .map(|(v, r)| v - r)
            .collect(),
    )?;
    let mut out = nc.apply(&diff)?;
    for b in 0..out.channels() {
        for (v, r) in out.band_mut(b).iter_mut().zip(&reference) {
            *v += r;
        }
    }
    Ok(out)
}

/// Dispatches on `cfg.method`.
pub fn demosaic(y: &Mosaic, pattern: &MsfaPattern, cfg: &InterpConfig) -> Result<SpectralCube> {
    match cfg.method {
        InterpMethod::Bilinear => bilinear_demosaic(y, pattern, cfg),
        InterpMethod::WeightedBilinear => weighted_bilinear_demosaic(y, pattern, cfg),
        InterpMethod::Gaussian => gaussian_demosaic(y, pattern, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn seq(c: usize) -> MsfaPattern {
        MsfaPattern::sequential(c).unwrap()
    }

    fn random_mosaic(rng: &mut Rng, h: usize, w: usize) -> Mosaic {
        Mosaic::from_fn(h, w, |_, _| rng.uniform() as f32)
    }

    #[test]
    fn reflect_is_symmetric() {
        let got: Vec<usize> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![2, 1, 0, 0, 1, 2, 3, 3, 2, 1]);
        assert_eq!(reflect(-5, 1), 0);
        assert_eq!(reflect(9, 2), 1);
    }

    #[test]
    fn sparse_split_matches_adjoint_and_partitions_pixels() {
        let mut rng = Rng::new(1);
        let y = random_mosaic(&mut rng, 9, 10);
        let p = seq(4);
        let (sparse, masks) = sparse_band_split(&y, &p);
        let op = MosaicOperator::new(p.clone(), 9, 10);
        assert_eq!(sparse, op.adjoint(&y).unwrap());
        for h in 0..9 {
            for w in 0..10 {
                assert_eq!(masks.iter().filter(|m| m.get(h, w)).count(), 1);
            }
        }
        // counting oracle: band (i, j) is sampled on rows i, i+c, ... and
        // columns j, j+c, ...
        for (b, m) in masks.iter().enumerate() {
            let (i, j) = (b / 4, b % 4);
            let rows = (i..9).step_by(4).count();
            let cols = (j..10).step_by(4).count();
            assert_eq!(m.count(), rows * cols);
            assert!(m.count() <= 9usize.div_ceil(4) * 10usize.div_ceil(4));
        }
    }

    #[test]
    fn constant_mosaic_gives_constant_cube_for_all_methods() {
        let y = Mosaic::filled(13, 11, 0.42);
        for method in [
            InterpMethod::Bilinear,
            InterpMethod::WeightedBilinear,
            InterpMethod::Gaussian,
        ] {
            let cfg = InterpConfig::new(method, 4);
            let x = demosaic(&y, &seq(4), &cfg).unwrap();
            assert_eq!(x.shape(), (13, 11, 16));
            for &v in x.data() {
                assert!((v - 0.42).abs() < 1e-6, "{method:?}: {v}");
            }
        }
    }

    #[test]
    fn isolated_sample_with_ones_kernel_fills_band() {
        let y = Mosaic::from_vec(2, 2, vec![0.7, 0.1, 0.2, 0.3]).unwrap();
        let x = normalized_convolution_demosaic(&y, &seq(2), &Kernel2d::ones(5).unwrap()).unwrap();
        for h in 0..2 {
            for w in 0..2 {
                assert!((x.get(h, w, 0) - 0.7).abs() < 1e-6);
                assert!((x.get(h, w, 3) - 0.3).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn triangle_kernel_hand_convolution() {
        // c = 2, band 0 sampled at even rows/cols of a 4x4 image.
        let y = Mosaic::from_fn(4, 4, |h, w| (h * 4 + w) as f32);
        let x = normalized_convolution_demosaic(&y, &seq(2), &Kernel2d::tent(3).unwrap()).unwrap();
        // Pixel (1,1): four diagonal band-0 samples at (0,0),(0,2),(2,0),(2,2)
        // each with weight 0.25 -> mean of 0, 2, 8, 10.
        assert!((x.get(1, 1, 0) - 5.0).abs() < 1e-6);
        // Pixel (1,2): vertical neighbours (0,2),(2,2) weight 0.5 each.
        assert!((x.get(1, 2, 0) - 6.0).abs() < 1e-6);
        // Pixel (2,1): horizontal neighbours (2,0),(2,2).
        assert!((x.get(2, 1, 0) - 9.0).abs() < 1e-6);
        // Sampled pixel keeps its value (neighbours out of reach).
        assert!((x.get(2, 2, 0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn bilinear_recovers_affine_ramp_in_interior() {
        let p = seq(2);
        let ramp =
            |h: usize, w: usize, b: usize| 0.1 * b as f32 + 0.03 * h as f32 - 0.02 * w as f32 + 0.5;
        let y = Mosaic::from_fn(8, 8, |h, w| ramp(h, w, p.band_at(h, w)));
        let cfg = InterpConfig {
            method: InterpMethod::Bilinear,
            kernel_size: 3,
            gaussian_sigma: 1.0,
        };
        let x = bilinear_demosaic(&y, &p, &cfg).unwrap();
        for h in 1..7 {
            for w in 1..7 {
                for b in 0..4 {
                    assert!(
                        (x.get(h, w, b) - ramp(h, w, b)).abs() < 1e-5,
                        "({h},{w},{b})"
                    );
                }
            }
        }
    }

    #[test]
    fn bilinear_auto_expands_small_kernel() {
        let mut rng = Rng::new(3);
        let y = random_mosaic(&mut rng, 16, 16);
        let small = InterpConfig::new(InterpMethod::Bilinear, 4);
        assert_eq!(small.kernel_size, 5);
        let expanded = InterpConfig {
            kernel_size: 7,
            ..small
        };
        assert_eq!(
            bilinear_demosaic(&y, &seq(4), &small).unwrap(),
            bilinear_demosaic(&y, &seq(4), &expanded).unwrap()
        );
        // explicit small kernel without expansion is rejected
        assert!(matches!(
            normalized_convolution_demosaic(&y, &seq(4), &Kernel2d::tent(5).unwrap()),
            Err(Error::KernelTooSmall { .. })
        ));
        let tiny_gauss = InterpConfig {
            kernel_size: 3,
            ..InterpConfig::new(InterpMethod::Gaussian, 4)
        };
        assert!(gaussian_demosaic(&y, &seq(4), &tiny_gauss).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = InterpConfig::new(InterpMethod::Gaussian, 4);
        cfg.kernel_size = 8;
        assert!(cfg.validate().is_err());
        cfg.kernel_size = 9;
        cfg.gaussian_sigma = 0.0;
        assert!(cfg.validate().is_err());
        assert!(Kernel2d::new(3, vec![0.0; 9]).is_err());
        assert!(Kernel2d::new(3, vec![-1.0; 9]).is_err());
    }

    #[test]
    fn interpolators_are_linear() {
        let mut rng = Rng::new(4);
        let p = seq(4);
        let y1 = random_mosaic(&mut rng, 20, 18);
        let y2 = random_mosaic(&mut rng, 20, 18);
        let (a, b) = (0.7f32, -1.3f32);
        let combo = Mosaic::from_vec(
            20,
            18,
            y1.data()
                .iter()
                .zip(y2.data())
                .map(|(u, v)| a * u + b * v)
                .collect(),
        )
        .unwrap();
        for method in [InterpMethod::Bilinear, InterpMethod::Gaussian] {
            let cfg = InterpConfig::new(method, 4);
            let lhs = demosaic(&combo, &p, &cfg).unwrap();
            let r1 = demosaic(&y1, &p, &cfg).unwrap();
            let r2 = demosaic(&y2, &p, &cfg).unwrap();
            for i in 0..lhs.data().len() {
                let rhs = a * r1.data()[i] + b * r2.data()[i];
                assert!((lhs.data()[i] - rhs).abs() <= 1e-5, "{method:?}");
            }
        }
    }

    #[test]
    fn nearly_consistent_on_smooth_scenes() {
        let p = seq(4);
        let op = MosaicOperator::new(p.clone(), 32, 32);
        let x = SpectralCube::from_fn(32, 32, 16, |h, w, c| {
            0.5 + 0.2 * ((h as f32) / 9.0).sin() * ((w as f32) / 11.0).cos() + 0.01 * c as f32
        });
        let y = op.apply(&x).unwrap();
        for method in [InterpMethod::Bilinear, InterpMethod::Gaussian] {
            let xhat = demosaic(&y, &p, &InterpConfig::new(method, 4)).unwrap();
            let yhat = op.apply(&xhat).unwrap();
            for (a, b) in yhat.data().iter().zip(y.data()) {
                assert!((a - b).abs() <= 0.1 * b.abs());
            }
        }
    }

    #[test]
    fn finite_output_for_extreme_inputs() {
        let mut rng = Rng::new(8);
        let y = Mosaic::from_fn(12, 12, |_, _| (rng.uniform_range(-1.0, 1.0) * 1e30) as f32);
        for method in [
            InterpMethod::Bilinear,
            InterpMethod::WeightedBilinear,
            InterpMethod::Gaussian,
        ] {
            let x = demosaic(&y, &seq(2), &InterpConfig::new(method, 2)).unwrap();
            assert!(x.data().iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn normalized_convolution_adjoint_identity() {
        let mut rng = Rng::new(6);
        let op = MosaicOperator::new(seq(4), 13, 17);
        let nc = NormalizedConvolution::new(&op, Kernel2d::gaussian(9, 2.0).unwrap()).unwrap();
        let y: Vec<f64> = (0..13 * 17).map(|_| rng.normal()).collect();
        let g: Vec<f64> = (0..13 * 17 * 16).map(|_| rng.normal()).collect();
        let mut fy = vec![0.0; g.len()];
        nc.apply_slice(&y, &mut fy);
        let mut atg = vec![0.0; y.len()];
        nc.adjoint_slice(&g, &mut atg);
        let lhs: f64 = fy.iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = y.iter().zip(&atg).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    /// Straight-line transcription of the four weighted-bilinear steps.
    fn weighted_bilinear_oracle(y: &Mosaic, p: &MsfaPattern, size: usize) -> Vec<Vec<Vec<f64>>> {
        let (hh, ww, c) = (y.height(), y.width(), p.channels());
        let r = (size / 2) as isize;
        let tent = |d: isize| 1.0 - (d.abs() as f64) / (r as f64 + 1.0);
        let refl = |i: isize, n: usize| reflect(i, n);
        let interp = |vals: &dyn Fn(usize, usize) -> Option<f64>, h: usize, w: usize| {
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let sh = refl(h as isize + dy, hh);
                    let sw = refl(w as isize + dx, ww);
                    if let Some(v) = vals(sh, sw) {
                        let k = tent(dy) * tent(dx);
                        num += k * v;
                        den += k;
                    }
                }
            }
            num / den
        };
        let mut reference = vec![vec![0.0; ww]; hh];
        for h in 0..hh {
            for w in 0..ww {
                let f = |sh: usize, sw: usize| {
                    (p.band_at(sh, sw) == REFERENCE_BAND).then(|| y.get(sh, sw) as f64)
                };
                reference[h][w] = interp(&f, h, w);
            }
        }
        let mut out = vec![vec![vec![0.0; ww]; hh]; c];
        for (b, plane) in out.iter_mut().enumerate() {
            for h in 0..hh {
                for w in 0..ww {
                    let f = |sh: usize, sw: usize| {
                        (p.band_at(sh, sw) == b).then(|| y.get(sh, sw) as f64 - reference[sh][sw])
                    };
                    plane[h][w] = reference[h][w] + interp(&f, h, w);
                }
            }
        }
        out
    }

    #[test]
    fn weighted_bilinear_matches_literal_oracle() {
        let mut rng = Rng::new(12);
        let p = seq(2);
        let y = random_mosaic(&mut rng, 8, 8);
        let cfg = InterpConfig {
            method: InterpMethod::WeightedBilinear,
            kernel_size: 7,
            gaussian_sigma: 1.0,
        };
        let got = weighted_bilinear_demosaic(&y, &p, &cfg).unwrap();
        let want = weighted_bilinear_oracle(&y, &p, 7);
        for b in 0..4 {
            for h in 0..8 {
                for w in 0..8 {
                    let d = (got.get(h, w, b) as f64 - want[b][h][w]).abs();
                    assert!(d <= 1e-6, "({h},{w},{b}) diff {d}");
                }
            }
        }
    }

    #[test]
    fn weighted_bilinear_equals_bilinear_on_grayscale_ramp_interior() {
        // Spectrally flat scene whose reference estimate is exact away from
        // the border, so every difference plane vanishes there.
        let p = seq(2);
        let y = Mosaic::from_fn(24, 24, |h, w| 0.2 + 0.01 * h as f32 + 0.02 * w as f32);
        let cfg = InterpConfig {
            method: InterpMethod::WeightedBilinear,
            kernel_size: 3,
            gaussian_sigma: 1.0,
        };
        let wb = weighted_bilinear_demosaic(&y, &p, &cfg).unwrap();
        let bl = bilinear_demosaic(&y, &p, &cfg).unwrap();
        for b in 0..4 {
            for h in 3..21 {
                for w in 3..21 {
                    assert!((wb.get(h, w, b) - bl.get(h, w, b)).abs() <= 1e-5);
                }
            }
        }
    }
}
