//! Dense image containers shared by every module.
//!
//! Cubes are stored band-sequential: band `c` occupies the contiguous slice
//! `data[c * H * W..(c + 1) * H * W]`, rows inside a band are row-major.
//! Values are `f32`; reductions accumulate in `f64`.

use std::fmt;

use crate::error::{Error, Result};

/// An `H x W x C` multispectral image.
#[derive(Clone, PartialEq)]
pub struct SpectralCube {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl fmt::Debug for SpectralCube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "SpectralCube({}x{}x{})",
            self.height, self.width, self.channels
        )
    }
}

impl SpectralCube {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Wraps planar data. Fails on a length mismatch or non-finite entries.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::shape(
                format!("{expected} values ({height}x{width}x{channels})"),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cube data"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds a cube by evaluating `f(h, w, c)` at every index.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for h in 0..height {
                for w in 0..width {
                    data.push(f(h, w, c));
                }
            }
        }
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, h: usize, w: usize, c: usize) -> usize {
        debug_assert!(h < self.height && w < self.width && c < self.channels);
        (c * self.height + h) * self.width + w
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data[self.index(h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, c: usize, value: f32) {
        let i = self.index(h, w, c);
        self.data[i] = value;
    }

    pub fn band(&self, c: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn band_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.pixels();
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Spectrum of pixel `(h, w)`.
    pub fn spectrum(&self, h: usize, w: usize) -> Vec<f32> {
        (0..self.channels).map(|c| self.get(h, w, c)).collect()
    }

    pub fn same_shape(&self, other: &SpectralCube) -> bool {
        self.shape() == other.shape()
    }

    pub(crate) fn check_same_shape(&self, other: &SpectralCube) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}x{}", self.height, self.width, self.channels),
                format!("{}x{}x{}", other.height, other.width, other.channels),
            ))
        }
    }

    /// Elementwise combination of two equally shaped cubes.
    pub fn map_binary(
        &self,
        other: &SpectralCube,
        op: impl Fn(f32, f32) -> f32,
    ) -> Result<SpectralCube> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(SpectralCube { data, ..*self })
    }

    pub fn map(&self, op: impl Fn(f32) -> f32) -> SpectralCube {
        SpectralCube {
            data: self.data.iter().map(|&v| op(v)).collect(),
            ..*self
        }
    }

    pub fn add(&self, other: &SpectralCube) -> Result<SpectralCube> {
        self.map_binary(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralCube) -> Result<SpectralCube> {
        self.map_binary(other, |a, b| a - b)
    }

    pub fn scale(&self, factor: f32) -> SpectralCube {
        self.map(|v| v * factor)
    }

    /// Sum of squares, accumulated in `f64`.
    pub fn squared_norm(&self) -> f64 {
        squared_norm(&self.data)
    }

    pub fn dot(&self, other: &SpectralCube) -> Result<f64> {
        self.check_same_shape(other)?;
        Ok(dot(&self.data, &other.data))
    }

    /// Cyclic spatial shift: output `(h, w)` takes input `(h - dh, w - dw)`
    /// modulo the image size.
    pub fn cyclic_shift(&self, dh: isize, dw: isize) -> SpectralCube {
        let mut out = SpectralCube::zeros(self.height, self.width, self.channels);
        for c in 0..self.channels {
            shift_plane(
                self.band(c),
                out.band_mut(c),
                self.height,
                self.width,
                dh,
                dw,
            );
        }
        out
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// An `H x W` single-channel measurement.
#[derive(Clone, PartialEq)]
pub struct Mosaic {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl fmt::Debug for Mosaic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mosaic({}x{})", self.height, self.width)
    }
}

impl Mosaic {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} values ({height}x{width})", height * width),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mosaic data"));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for h in 0..height {
            for w in 0..width {
                data.push(f(h, w));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize) -> f32 {
        self.data[h * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, value: f32) {
        self.data[h * self.width + w] = value;
    }

    pub fn squared_norm(&self) -> f64 {
        squared_norm(&self.data)
    }

    pub fn dot(&self, other: &Mosaic) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(dot(&self.data, &other.data))
    }

    pub fn cyclic_shift(&self, dh: isize, dw: isize) -> Mosaic {
        let mut out = Mosaic::zeros(self.height, self.width);
        shift_plane(&self.data, &mut out.data, self.height, self.width, dh, dw);
        out
    }

    /// Views the mosaic as a one-band cube.
    pub fn to_cube(&self) -> SpectralCube {
        SpectralCube {
            height: self.height,
            width: self.width,
            channels: 1,
            data: self.data.clone(),
        }
    }

    pub fn from_cube(cube: &SpectralCube) -> Result<Self> {
        if cube.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: cube.channels(),
            });
        }
        Ok(Self {
            height: cube.height(),
            width: cube.width(),
            data: cube.data().to_vec(),
        })
    }
}

/// Per-pixel boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(height * width, data.len()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, h: usize, w: usize) -> bool {
        self.data[h * self.width + w]
    }

    #[inline]
    pub fn set(&mut self, h: usize, w: usize, value: bool) {
        self.data[h * self.width + w] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&v| v)
    }

    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        if (self.height, self.width) != (other.height, other.width) {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ));
        }
        Ok(ValidityMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }
}

pub(crate) fn shift_plane<T: Copy>(
    src: &[T],
    dst: &mut [T],
    height: usize,
    width: usize,
    dh: isize,
    dw: isize,
) {
    let sh = dh.rem_euclid(height.max(1) as isize) as usize;
    let sw = dw.rem_euclid(width.max(1) as isize) as usize;
    for h in 0..height {
        let src_h = (h + height - sh) % height;
        for w in 0..width {
            let src_w = (w + width - sw) % width;
            dst[h * width + w] = src[src_h * width + src_w];
        }
    }
}

pub fn squared_norm(values: &[f32]) -> f64 {
    values.iter().map(|&v| (v as f64) * (v as f64)).sum()
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}
