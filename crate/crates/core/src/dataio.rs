//! Cube files, mosaic simulation, synthetic scenes and image export.
//!
//! # Cube file layout
//!
//! All fields little-endian:
//!
//! ```text
//! "MSIC"        4-byte magic
//! u32 version   = 1
//! u32 H, u32 W, u32 C
//! u32 dtype     = 1 (float32)
//! f32 payload[C][H][W]   band-sequential
//! ```
//!
//! Mosaics are stored as single-band cubes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio::{put_f32s, put_u32, read_file, write_file_atomic, Reader};
use crate::cube::{Mosaic, SpectralCube};
use crate::error::{Error, Result};
use crate::msfa::{MosaicOperator, MsfaPattern};
use crate::rng::Rng;

pub const CUBE_MAGIC: &[u8; 4] = b"MSIC";
pub const CUBE_VERSION: u32 = 1;
pub const DTYPE_F32: u32 = 1;
const HEADER_LEN: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CubeFileHeader {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl CubeFileHeader {
    pub fn payload_len(&self) -> usize {
        4 * self.height * self.width * self.channels
    }
}

pub fn encode_cube(x: &SpectralCube) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * x.data().len());
    out.extend_from_slice(CUBE_MAGIC);
    put_u32(&mut out, CUBE_VERSION);
    put_u32(&mut out, x.height() as u32);
    put_u32(&mut out, x.width() as u32);
    put_u32(&mut out, x.channels() as u32);
    put_u32(&mut out, DTYPE_F32);
    put_f32s(&mut out, x.data());
    out
}

fn decode_header(path: &Path, r: &mut Reader<'_>) -> Result<CubeFileHeader> {
    if r.remaining() < CUBE_MAGIC.len() || r.take(CUBE_MAGIC.len())? != CUBE_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let version = r.u32()?;
    if version != CUBE_VERSION {
        return Err(Error::UnsupportedFormat(format!(
            "{}: cube format version {version}",
            path.display()
        )));
    }
    let (height, width, channels) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let dtype = r.u32()?;
    if dtype != DTYPE_F32 {
        return Err(Error::UnsupportedFormat(format!(
            "{}: dtype tag {dtype}",
            path.display()
        )));
    }
    Ok(CubeFileHeader {
        height,
        width,
        channels,
    })
}

pub fn decode_cube(path: &Path, bytes: &[u8]) -> Result<SpectralCube> {
    let mut r = Reader::new(path, bytes);
    let header = decode_header(path, &mut r)?;
    let n = header
        .height
        .checked_mul(header.width)
        .and_then(|v| v.checked_mul(header.channels))
        .ok_or_else(|| Error::Parse(format!("{}: dimensions overflow", path.display())))?;
    let data = r.f32s(n)?;
    if r.remaining() != 0 {
        return Err(Error::Parse(format!(
            "{}: {} bytes after the payload",
            path.display(),
            r.remaining()
        )));
    }
    SpectralCube::from_vec(header.height, header.width, header.channels, data)
}

pub fn write_cube(path: &Path, x: &SpectralCube) -> Result<()> {
    write_file_atomic(path, &encode_cube(x))
}

pub fn read_cube(path: &Path) -> Result<SpectralCube> {
    decode_cube(path, &read_file(path)?)
}

/// Reads only the header.
pub fn probe_cube(path: &Path) -> Result<CubeFileHeader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(HEADER_LEN);
    file.take(HEADER_LEN as u64)
        .read_to_end(&mut buf)
        .map_err(|e| Error::io(path, e))?;
    decode_header(path, &mut Reader::new(path, &buf))
}

pub fn write_mosaic(path: &Path, y: &Mosaic) -> Result<()> {
    write_cube(path, &y.to_cube())
}

pub fn read_mosaic(path: &Path) -> Result<Mosaic> {
    let cube = read_cube(path)?;
    if cube.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: cube.channels(),
        });
    }
    Mosaic::from_cube(&cube)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationConfig {
    pub pattern: MsfaPattern,
    pub noise_sigma: f64,
}

/// `y = A x + σ ε` with standard normal `ε` drawn in raster order.
pub fn simulate_mosaic(x: &SpectralCube, cfg: &SimulationConfig, rng: &mut Rng) -> Result<Mosaic> {
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise sigma must be >= 0, got {}",
            cfg.noise_sigma
        )));
    }
    let op = MosaicOperator::new(cfg.pattern.clone(), x.height(), x.width());
    let mut y = op.apply(x)?;
    if cfg.noise_sigma > 0.0 {
        for v in y.data_mut() {
            *v += (cfg.noise_sigma * rng.normal()) as f32;
        }
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Correlation length of the background in pixels; infinity gives a
    /// spatially constant background.
    pub smoothness: f64,
    pub n_shapes: usize,
    /// Width of the spectral bumps as a fraction of the band axis.
    pub spectra_smoothness: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 25,
            height: 64,
            width: 64,
            channels: 16,
            smoothness: 8.0,
            n_shapes: 8,
            spectra_smoothness: 0.4,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument(
                "scene dimensions must be positive".into(),
            ));
        }
        if !(self.smoothness > 0.0)
            || !(self.spectra_smoothness > 0.0 && self.spectra_smoothness.is_finite())
        {
            return Err(Error::InvalidArgument(
                "smoothness parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

const FOURIER_FEATURES: usize = 64;

/// Smooth random field with values in `[0, 1]`: random Fourier features of
/// a Gaussian kernel with correlation length `scale`, mapped around 0.5.
fn lowpass_field(rng: &mut Rng, height: usize, width: usize, scale: f64) -> Vec<f64> {
    let feats: Vec<(f64, f64, f64)> = (0..FOURIER_FEATURES)
        .map(|_| {
            let (wy, wx) = (rng.normal() / scale, rng.normal() / scale);
            (wy, wx, rng.uniform_range(0.0, 2.0 * std::f64::consts::PI))
        })
        .collect();
    let norm = (2.0 / FOURIER_FEATURES as f64).sqrt();
    let mut out = Vec::with_capacity(height * width);
    for h in 0..height {
        for w in 0..width {
            let z: f64 = feats
                .iter()
                .map(|&(wy, wx, phase)| (wy * h as f64 + wx * w as f64 + phase).cos())
                .sum::<f64>()
                * norm;
            out.push((0.5 + 0.25 * z).clamp(0.0, 1.0));
        }
    }
    out
}

/// Sum of three Gaussian bumps over the band axis, rescaled into
/// `[0.1, 0.9]`.
fn smooth_spectrum(rng: &mut Rng, channels: usize, width: f64) -> Vec<f64> {
    let mut s = vec![0.0; channels];
    for _ in 0..3 {
        let mu = rng.uniform();
        let sd = width * (0.5 + rng.uniform());
        let amp = rng.uniform();
        for (b, v) in s.iter_mut().enumerate() {
            let t = if channels > 1 {
                b as f64 / (channels - 1) as f64
            } else {
                0.0
            };
            *v += amp * (-0.5 * ((t - mu) / sd).powi(2)).exp();
        }
    }
    let max = s.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return vec![0.5; channels];
    }
    s.into_iter().map(|v| 0.1 + 0.8 * v / max).collect()
}

enum Shape {
    Ellipse {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        theta: f64,
    },
    /// Convex polygon, vertices counter-clockwise.
    Polygon(Vec<(f64, f64)>),
}

impl Shape {
    fn random(rng: &mut Rng, height: usize, width: usize) -> Self {
        let (cy, cx) = (rng.uniform() * height as f64, rng.uniform() * width as f64);
        let size = height.min(width) as f64;
        if rng.uniform() < 0.5 {
            Shape::Ellipse {
                cy,
                cx,
                ry: size * (0.06 + 0.22 * rng.uniform()),
                rx: size * (0.06 + 0.22 * rng.uniform()),
                theta: rng.uniform() * std::f64::consts::PI,
            }
        } else {
            let n = 3 + rng.below(4);
            let radius = size * (0.08 + 0.2 * rng.uniform());
            let mut angles: Vec<f64> = (0..n)
                .map(|_| rng.uniform() * 2.0 * std::f64::consts::PI)
                .collect();
            angles.sort_by(f64::total_cmp);
            Shape::Polygon(
                angles
                    .iter()
                    .map(|a| (cy + radius * a.sin(), cx + radius * a.cos()))
                    .collect(),
            )
        }
    }

    fn contains(&self, y: f64, x: f64) -> bool {
        match self {
            Shape::Ellipse {
                cy,
                cx,
                ry,
                rx,
                theta,
            } => {
                let (dy, dx) = (y - cy, x - cx);
                let u = dx * theta.cos() + dy * theta.sin();
                let v = -dx * theta.sin() + dy * theta.cos();
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Shape::Polygon(pts) => {
                // inside iff on the same side of every edge
                let mut sign = 0.0f64;
                for i in 0..pts.len() {
                    let (y0, x0) = pts[i];
                    let (y1, x1) = pts[(i + 1) % pts.len()];
                    let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
                    if cross != 0.0 {
                        if sign == 0.0 {
                            sign = cross.signum();
                        } else if cross.signum() != sign {
                            return false;
                        }
                    }
                }
                true
            }
        }
    }
}

/// Piecewise-smooth scene: two smooth background layers with their own
/// spectra, overlaid with shaded ellipses and convex polygons.
pub fn synth_scene(cfg: &SynthConfig, rng: &mut Rng) -> Result<SpectralCube> {
    cfg.validate()?;
    let (h, w, c) = (cfg.height, cfg.width, cfg.channels);
    let plane = h * w;
    let a = lowpass_field(rng, h, w, cfg.smoothness);
    let b = lowpass_field(rng, h, w, cfg.smoothness);
    let sa = smooth_spectrum(rng, c, cfg.spectra_smoothness);
    let sb = smooth_spectrum(rng, c, cfg.spectra_smoothness);
    let mut x = vec![0.0f64; plane * c];
    for band in 0..c {
        for p in 0..plane {
            x[band * plane + p] = 0.6 * a[p] * sa[band] + 0.3 * b[p] * sb[band];
        }
    }
    for _ in 0..cfg.n_shapes {
        let shape = Shape::random(rng, h, w);
        let spectrum = smooth_spectrum(rng, c, cfg.spectra_smoothness);
        let shade = lowpass_field(rng, h, w, 0.75 * cfg.smoothness);
        for r in 0..h {
            for col in 0..w {
                if shape.contains(r as f64, col as f64) {
                    let p = r * w + col;
                    let s = 0.8 + 0.2 * shade[p];
                    for band in 0..c {
                        x[band * plane + p] = spectrum[band] * s;
                    }
                }
            }
        }
    }
    SpectralCube::from_vec(
        h,
        w,
        c,
        x.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect(),
    )
}

/// `cfg.count` scenes; scene `i` uses substream `i` of the seed.
pub fn synth_dataset(cfg: &SynthConfig) -> Result<Vec<SpectralCube>> {
    let base = Rng::new(cfg.seed);
    (0..cfg.count)
        .into_par_iter()
        .map(|i| synth_scene(cfg, &mut base.substream(i as u64)))
        .collect()
}

/// Pearson correlation between two sample vectors.
pub fn correlation(a: &[f32], b: &[f32]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| v as f64).sum::<f64>() / n;
    let mb = b.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&p, &q) in a.iter().zip(b) {
        let (dp, dq) = (p as f64 - ma, q as f64 - mb);
        cov += dp * dq;
        va += dp * dp;
        vb += dq * dq;
    }
    cov / (va * vb).sqrt()
}

/// How bands become RGB channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BandSelection {
    /// Bands for red, green, blue.
    Triplet([usize; 3]),
    /// Average of the upper, middle and lower thirds of the band axis for
    /// red, green and blue.
    Average,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RgbScaling {
    /// Values in `[0, 1]` map to `[0, 255]`, clipped.
    Fixed,
    /// Global min and max map to 0 and 255.
    MinMax,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    /// Interleaved RGB rows.
    pub data: Vec<u8>,
}

pub fn false_rgb(
    x: &SpectralCube,
    selection: BandSelection,
    scaling: RgbScaling,
) -> Result<RgbImage> {
    let (h, w, c) = x.shape();
    let plane = h * w;
    let channels: [Vec<f64>; 3] = match selection {
        BandSelection::Triplet(bands) => {
            if let Some(&bad) = bands.iter().find(|&&b| b >= c) {
                return Err(Error::InvalidArgument(format!(
                    "band {bad} out of range for {c} bands"
                )));
            }
            bands.map(|b| x.band(b).iter().map(|&v| v as f64).collect())
        }
        BandSelection::Average => {
            let groups = [(2 * c / 3, c), (c / 3, 2 * c / 3), (0, c / 3)];
            groups.map(|(lo, hi)| {
                let (lo, hi) = if hi > lo {
                    (lo, hi)
                } else {
                    (lo.min(c - 1), lo.min(c - 1) + 1)
                };
                (0..plane)
                    .map(|p| (lo..hi).map(|b| x.band(b)[p] as f64).sum::<f64>() / (hi - lo) as f64)
                    .collect()
            })
        }
    };
    let (lo, hi) = match scaling {
        RgbScaling::Fixed => (0.0, 1.0),
        RgbScaling::MinMax => {
            let all = channels.iter().flatten();
            let lo = all.clone().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        }
    };
    let span = hi - lo;
    let quantize = |v: f64| -> u8 {
        let t = if span > 0.0 { (v - lo) / span } else { 0.5 };
        (t.clamp(0.0, 1.0) * 255.0).round() as u8
    };
    let mut data = Vec::with_capacity(plane * 3);
    for p in 0..plane {
        for ch in &channels {
            data.push(quantize(ch[p]));
        }
    }
    Ok(RgbImage {
        height: h,
        width: w,
        data,
    })
}

pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| Error::Png(e.to_string()))?;
        writer
            .write_image_data(&img.data)
            .map_err(|e| Error::Png(e.to_string()))?;
        writer.finish().map_err(|e| Error::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    write_file_atomic(path, &encode_png(img)?)
}

/// Reads a grayscale PNG (8 or 16 bit) as values in `[0, 1]`.
pub fn read_gray_png(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png(format!("{}: image too large", path.display())))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::Png(format!("{}: {e}", path.display())))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(Error::UnsupportedFormat(format!(
            "{}: expected a grayscale band image, got {:?}",
            path.display(),
            info.color_type
        )));
    }
    let (h, w) = (info.height as usize, info.width as usize);
    let mut values = Vec::with_capacity(h * w);
    for row in buf.chunks(info.line_size).take(h) {
        match info.bit_depth {
            png::BitDepth::Sixteen => values.extend(
                row.chunks_exact(2)
                    .take(w)
                    .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0),
            ),
            _ => values.extend(row.iter().take(w).map(|&b| b as f32 / 255.0)),
        }
    }
    Ok((h, w, values))
}

/// Stacks the grayscale PNGs of a directory, in file-name order, into a
/// cube with one band per image.
pub fn import_band_images(dir: &Path) -> Result<SpectralCube> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no PNG band images in {}",
            dir.display()
        )));
    }
    let mut data = Vec::new();
    let mut dims = None;
    for f in &files {
        let (h, w, v) = read_gray_png(f)?;
        match dims {
            None => dims = Some((h, w)),
            Some(d) if d != (h, w) => {
                return Err(Error::shape(
                    format!("{}x{}", d.0, d.1),
                    format!("{h}x{w} in {}", f.display()),
                ))
            }
            _ => {}
        }
        data.extend(v);
    }
    let (h, w) = dims.unwrap();
    SpectralCube::from_vec(h, w, files.len(), data)
}

/// One scene listed in a dataset manifest. Paths are relative to the
/// manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub cube: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mosaic: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub train: Vec<ManifestEntry>,
    pub test: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Number of training scenes for an 80/20 split (at least one test
    /// scene once there are two or more).
    pub fn train_count(total: usize) -> usize {
        if total < 2 {
            return total;
        }
        ((total * 4) / 5).clamp(1, total - 1)
    }
}
