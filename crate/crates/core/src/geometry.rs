//! Perspective transforms of a camera rotating about its centre.
//!
//! A homography `K Rz(θz) Ry(θy) Rx(θx) K⁻¹` maps homogeneous pixel
//! coordinates `(x, y, 1)` (x = column, y = row) of one view to another.
//! Warping is done by inverse mapping with bilinear sampling; output pixels
//! whose source falls outside the image are flagged in a [`ValidityMask`].

use nalgebra::Matrix3;
use num_traits::Float;

use crate::cube::{SpectralCube, ValidityMask};
use crate::error::{Error, Result};
use crate::rng::Rng;

const SINGULAR_DET: f64 = 1e-12;
const MIN_W: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub pixel_aspect: f64,
}

impl Intrinsics {
    pub fn new(focal: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self {
            focal,
            cx,
            cy,
            pixel_aspect: 1.0,
        };
        k.validate()?;
        Ok(k)
    }

    /// Focal length equal to the image width, principal point at the centre.
    pub fn for_image(height: usize, width: usize) -> Self {
        Self {
            focal: width.max(1) as f64,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            pixel_aspect: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal > 0.0 && self.focal.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "focal length must be > 0, got {}",
                self.focal
            )));
        }
        if !(self.pixel_aspect > 0.0 && self.pixel_aspect.is_finite()) {
            return Err(Error::InvalidArgument("pixel aspect must be > 0".into()));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidArgument(
                "principal point must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.focal,
            0.0,
            self.cx,
            0.0,
            self.focal * self.pixel_aspect,
            self.cy,
            0.0,
            0.0,
            1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let fy = self.focal * self.pixel_aspect;
        Matrix3::new(
            1.0 / self.focal,
            0.0,
            -self.cx / self.focal,
            0.0,
            1.0 / fy,
            -self.cy / fy,
            0.0,
            0.0,
            1.0,
        )
    }
}

/// Rotation angles in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EulerAngles {
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
}

impl EulerAngles {
    pub fn new(theta_x: f64, theta_y: f64, theta_z: f64) -> Self {
        Self {
            theta_x,
            theta_y,
            theta_z,
        }
    }
}

pub fn rotation_x(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rotation_y(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rotation_z(t: f64) -> Matrix3<f64> {
    let (s, c) = t.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Invertible 3x3 projective transform, normalized so `m[2][2] = 1` when
/// that entry is nonzero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    matrix: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography"));
        }
        let m = if m[(2, 2)] != 0.0 { m / m[(2, 2)] } else { m };
        let det = m.determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(Error::SingularHomography(det));
        }
        Ok(Self { matrix: m })
    }

    /// Moves image content by `(dx, dy)` pixels (column, row).
    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            matrix: Matrix3::new(1.0, 0.0, dx, 0.0, 1.0, dy, 0.0, 0.0, 1.0),
        }
    }

    pub fn from_angles(k: &Intrinsics, angles: EulerAngles) -> Self {
        let m = k.matrix()
            * rotation_z(angles.theta_z)
            * rotation_y(angles.theta_y)
            * rotation_x(angles.theta_x)
            * k.inverse_matrix();
        Self::from_matrix(m).expect("conjugated rotations are invertible")
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> Result<Self> {
        let det = self.matrix.determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(Error::SingularHomography(det));
        }
        let inv = self
            .matrix
            .try_inverse()
            .ok_or(Error::SingularHomography(det))?;
        Self::from_matrix(inv)
    }

    /// `self ∘ other` (apply `other` first).
    pub fn compose(&self, other: &Homography) -> Result<Self> {
        Self::from_matrix(self.matrix * other.matrix)
    }

    /// Maps `(x, y)`; `None` when the homogeneous coordinate is `<= 1e-8`.
    pub fn apply_point(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        let m = &self.matrix;
        let w = m[(2, 0)] * x + m[(2, 1)] * y + m[(2, 2)];
        if w <= MIN_W {
            return None;
        }
        Some((
            (m[(0, 0)] * x + m[(0, 1)] * y + m[(0, 2)]) / w,
            (m[(1, 0)] * x + m[(1, 1)] * y + m[(1, 2)]) / w,
        ))
    }
}

/// `K Rz Ry Rx K⁻¹`.
pub fn homography_from_angles(k: &Intrinsics, angles: EulerAngles) -> Homography {
    Homography::from_angles(k, angles)
}

pub fn invert(h: &Homography) -> Result<Homography> {
    h.inverse()
}

/// Uniform angle ranges (half-widths, radians) for random camera rotations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransformSamplerConfig {
    pub range_x: f64,
    pub range_y: f64,
    pub range_z: f64,
    pub intrinsics: Intrinsics,
}

impl TransformSamplerConfig {
    /// Pan/tilt within ±5°, roll within ±180°, default intrinsics.
    pub fn for_image(height: usize, width: usize) -> Self {
        Self {
            range_x: 5f64.to_radians(),
            range_y: 5f64.to_radians(),
            range_z: std::f64::consts::PI,
            intrinsics: Intrinsics::for_image(height, width),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for r in [self.range_x, self.range_y, self.range_z] {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "angle range must be >= 0, got {r}"
                )));
            }
        }
        self.intrinsics.validate()
    }

    pub fn sample_angles(&self, rng: &mut Rng) -> EulerAngles {
        EulerAngles {
            theta_x: rng.uniform_range(-self.range_x, self.range_x),
            theta_y: rng.uniform_range(-self.range_y, self.range_y),
            theta_z: rng.uniform_range(-self.range_z, self.range_z),
        }
    }
}

pub fn sample_transform(rng: &mut Rng, cfg: &TransformSamplerConfig) -> Homography {
    Homography::from_angles(&cfg.intrinsics, cfg.sample_angles(rng))
}

#[derive(Clone, Copy, Debug)]
struct Tap {
    i00: usize,
    i01: usize,
    i10: usize,
    i11: usize,
    fx: f64,
    fy: f64,
}

/// Precomputed inverse-mapping sample positions for one image size; the
/// warp is linear in the pixel values and this plan applies it and its
/// adjoint to any number of bands.
#[derive(Clone, Debug)]
pub struct WarpPlan {
    height: usize,
    width: usize,
    taps: Vec<Option<Tap>>,
}

impl WarpPlan {
    pub fn new(h: &Homography, height: usize, width: usize) -> Result<Self> {
        let inv = h.inverse()?;
        let mut taps = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                taps.push(
                    inv.apply_point(c as f64, r as f64)
                        .and_then(|(qx, qy)| Self::tap(qx, qy, height, width)),
                );
            }
        }
        Ok(Self {
            height,
            width,
            taps,
        })
    }

    fn tap(qx: f64, qy: f64, height: usize, width: usize) -> Option<Tap> {
        let (wmax, hmax) = (width as f64 - 1.0, height as f64 - 1.0);
        if !(qx >= 0.0 && qx <= wmax && qy >= 0.0 && qy <= hmax) {
            return None;
        }
        let x0 = qx.floor() as usize;
        let y0 = qy.floor() as usize;
        let (x1, fx) = if x0 + 1 < width {
            (x0 + 1, qx - x0 as f64)
        } else {
            (x0, 0.0)
        };
        let (y1, fy) = if y0 + 1 < height {
            (y0 + 1, qy - y0 as f64)
        } else {
            (y0, 0.0)
        };
        Some(Tap {
            i00: y0 * width + x0,
            i01: y0 * width + x1,
            i10: y1 * width + x0,
            i11: y1 * width + x1,
            fx,
            fy,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn mask(&self) -> ValidityMask {
        ValidityMask::from_vec(
            self.height,
            self.width,
            self.taps.iter().map(Option::is_some).collect(),
        )
        .expect("plan covers the image")
    }

    /// Source pixel indices `(row, col)` of the four bilinear neighbours of
    /// a valid output pixel.
    pub fn neighbours(&self, h: usize, w: usize) -> Option<[(usize, usize); 4]> {
        self.taps[h * self.width + w]
            .map(|t| [t.i00, t.i01, t.i10, t.i11].map(|i| (i / self.width, i % self.width)))
    }

    /// Warps planar data with any number of bands; invalid pixels get 0.
    pub fn apply_slice<T: Float>(&self, src: &[T], dst: &mut [T]) {
        let plane = self.height * self.width;
        for (s, d) in src.chunks(plane).zip(dst.chunks_mut(plane)) {
            for (out, tap) in d.iter_mut().zip(&self.taps) {
                *out = match tap {
                    Some(t) => {
                        let fx = T::from(t.fx).unwrap();
                        let fy = T::from(t.fy).unwrap();
                        let top = s[t.i00] + fx * (s[t.i01] - s[t.i00]);
                        let bottom = s[t.i10] + fx * (s[t.i11] - s[t.i10]);
                        top + fy * (bottom - top)
                    }
                    None => T::zero(),
                };
            }
        }
    }

    /// Adjoint of [`apply_slice`](Self::apply_slice); overwrites `dst`.
    pub fn adjoint_slice<T: Float>(&self, grad: &[T], dst: &mut [T]) {
        let plane = self.height * self.width;
        dst.iter_mut().for_each(|v| *v = T::zero());
        for (g, d) in grad.chunks(plane).zip(dst.chunks_mut(plane)) {
            for (&gv, tap) in g.iter().zip(&self.taps) {
                if let Some(t) = tap {
                    let fx = T::from(t.fx).unwrap();
                    let fy = T::from(t.fy).unwrap();
                    let one = T::one();
                    d[t.i00] = d[t.i00] + gv * (one - fx) * (one - fy);
                    d[t.i01] = d[t.i01] + gv * fx * (one - fy);
                    d[t.i10] = d[t.i10] + gv * (one - fx) * fy;
                    d[t.i11] = d[t.i11] + gv * fx * fy;
                }
            }
        }
    }
}

/// `T_g(x)` by inverse mapping with bilinear sampling.
pub fn warp(x: &SpectralCube, h: &Homography) -> Result<(SpectralCube, ValidityMask)> {
    let plan = WarpPlan::new(h, x.height(), x.width())?;
    let mut out = vec![0.0f32; x.data().len()];
    plan.apply_slice(x.data(), &mut out);
    Ok((
        SpectralCube::from_vec(x.height(), x.width(), x.channels(), out)?,
        plan.mask(),
    ))
}
