//! The mosaicing operator `A` of a periodic multispectral filter array.
//!
//! Each sensor pixel `(h, w)` records the single band
//! `band_index[h mod c][w mod c]`, so every row of `A` is a distinct
//! standard basis vector. Consequently `A Aᵀ = I` and the pseudo-inverse is
//! the adjoint.

use std::fmt;
use std::str::FromStr;

use num_traits::Zero;

use crate::cube::{Mosaic, SpectralCube, ValidityMask};
use crate::error::{Error, Result};

/// Periodic `c x c` grid of band indices. Always describes `C = c²` bands.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MsfaPattern {
    period: usize,
    band_index: Vec<usize>,
}

impl MsfaPattern {
    /// Row-major sequential layout: `band_index[i][j] = i * c + j`.
    pub fn sequential(period: usize) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("MSFA period must be >= 1".into()));
        }
        Ok(Self {
            period,
            band_index: (0..period * period).collect(),
        })
    }

    /// Arbitrary layout given as a row-major `c x c` grid.
    pub fn from_grid(period: usize, band_index: Vec<usize>) -> Result<Self> {
        if period == 0 {
            return Err(Error::InvalidArgument("MSFA period must be >= 1".into()));
        }
        if band_index.len() != period * period {
            return Err(Error::InvalidArgument(format!(
                "pattern grid needs {} entries, got {}",
                period * period,
                band_index.len()
            )));
        }
        let channels = period * period;
        if let Some(&bad) = band_index.iter().find(|&&b| b >= channels) {
            return Err(Error::InvalidArgument(format!(
                "band index {bad} out of range for {channels} channels"
            )));
        }
        Ok(Self { period, band_index })
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn channels(&self) -> usize {
        self.period * self.period
    }

    pub fn grid(&self) -> &[usize] {
        &self.band_index
    }

    /// Band sampled at image position `(h, w)` (pattern tiled from the origin).
    #[inline]
    pub fn band_at(&self, h: usize, w: usize) -> usize {
        self.band_index[(h % self.period) * self.period + w % self.period]
    }

    /// True when every band appears exactly once per period.
    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.channels()];
        for &b in &self.band_index {
            if seen[b] {
                return false;
            }
            seen[b] = true;
        }
        true
    }
}

impl Default for MsfaPattern {
    fn default() -> Self {
        Self::sequential(4).expect("period 4 is valid")
    }
}

/// Text form: the period `c` followed by the `c x c` grid, whitespace
/// separated. Lines starting with `#` are comments.
impl FromStr for MsfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut tokens = s
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let period: usize = tokens
            .next()
            .ok_or_else(|| Error::Parse("empty pattern file".into()))?
            .parse()
            .map_err(|e| Error::Parse(format!("period: {e}")))?;
        let grid = tokens
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("band index {t:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_grid(period, grid)
    }
}

impl fmt::Display for MsfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.period)?;
        for row in self.band_index.chunks(self.period) {
            let row: Vec<String> = row.iter().map(|b| b.to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// `A` for a fixed image size. Any `H, W` is accepted; the pattern is tiled
/// with modular indexing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MosaicOperator {
    pattern: MsfaPattern,
    height: usize,
    width: usize,
}

impl MosaicOperator {
    pub fn new(pattern: MsfaPattern, height: usize, width: usize) -> Self {
        Self {
            pattern,
            height,
            width,
        }
    }

    pub fn pattern(&self) -> &MsfaPattern {
        &self.pattern
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.pattern.channels()
    }

    /// Same pattern, different image size.
    pub fn resized(&self, height: usize, width: usize) -> Self {
        Self::new(self.pattern.clone(), height, width)
    }

    fn check_cube(&self, x: &SpectralCube) -> Result<()> {
        if x.channels() != self.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                actual: x.channels(),
            });
        }
        if (x.height(), x.width()) != (self.height, self.width) {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", x.height(), x.width()),
            ));
        }
        Ok(())
    }

    fn check_mosaic(&self, y: &Mosaic) -> Result<()> {
        if y.shape() != (self.height, self.width) {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", y.height(), y.width()),
            ));
        }
        Ok(())
    }

    /// `y = A x`
    pub fn apply(&self, x: &SpectralCube) -> Result<Mosaic> {
        self.check_cube(x)?;
        let mut out = vec![0.0f32; self.height * self.width];
        self.apply_slice(x.data(), &mut out);
        Mosaic::from_vec(self.height, self.width, out)
    }

    /// `Aᵀ y`: scatters each measurement into its band, zero elsewhere.
    pub fn adjoint(&self, y: &Mosaic) -> Result<SpectralCube> {
        self.check_mosaic(y)?;
        let mut out = vec![0.0f32; self.height * self.width * self.channels()];
        self.adjoint_slice(y.data(), &mut out);
        SpectralCube::from_vec(self.height, self.width, self.channels(), out)
    }

    /// `A† y`, identical to [`adjoint`](Self::adjoint) for a selection operator.
    pub fn pseudo_inverse(&self, y: &Mosaic) -> Result<SpectralCube> {
        self.adjoint(y)
    }

    /// Projection onto the null-space: `x - Aᵀ A x`. Zeroes every sampled
    /// entry and keeps the rest.
    pub fn nullspace_project(&self, x: &SpectralCube) -> Result<SpectralCube> {
        self.check_cube(x)?;
        let mut out = x.clone();
        let plane = self.height * self.width;
        let data = out.data_mut();
        for h in 0..self.height {
            for w in 0..self.width {
                let b = self.pattern.band_at(h, w);
                let i = b * plane + h * self.width + w;
                data[i] = 0.0;
            }
        }
        Ok(out)
    }

    /// Pixels where band `band` is sampled.
    pub fn band_mask(&self, band: usize) -> ValidityMask {
        let mut mask = ValidityMask::new(self.height, self.width, false);
        for h in 0..self.height {
            for w in 0..self.width {
                if self.pattern.band_at(h, w) == band {
                    mask.set(h, w, true);
                }
            }
        }
        mask
    }

    /// Slice-level forward map on planar data of any scalar type.
    pub fn apply_slice<T: Copy>(&self, x: &[T], out: &mut [T]) {
        let plane = self.height * self.width;
        debug_assert_eq!(x.len(), plane * self.channels());
        debug_assert_eq!(out.len(), plane);
        for h in 0..self.height {
            let row = h * self.width;
            for w in 0..self.width {
                let b = self.pattern.band_at(h, w);
                out[row + w] = x[b * plane + row + w];
            }
        }
    }

    /// Slice-level adjoint; overwrites `out`.
    pub fn adjoint_slice<T: Copy + Zero>(&self, y: &[T], out: &mut [T]) {
        let plane = self.height * self.width;
        debug_assert_eq!(y.len(), plane);
        debug_assert_eq!(out.len(), plane * self.channels());
        out.iter_mut().for_each(|v| *v = T::zero());
        for h in 0..self.height {
            let row = h * self.width;
            for w in 0..self.width {
                let b = self.pattern.band_at(h, w);
                out[b * plane + row + w] = y[row + w];
            }
        }
    }
}
