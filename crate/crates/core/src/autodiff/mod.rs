//! A small convolutional reconstructor with reverse-mode gradients.
//!
//! The network is residual: `f(init) = init + net(init)`, where `net` is a
//! stack of same-padded convolutions separated by SiLU activations. Graphs
//! are recorded on a [`Graph`] tape together with the fixed linear maps the
//! training losses need (mosaicing, interpolation, warping, shifting), so
//! gradients flow through the complete loss.
//!
//! Everything is generic over [`Real`] so the same forward code runs in
//! `f32` for training and in `f64` for finite-difference checks.

mod checkpoint;
mod conv;
mod network;
mod optim;
mod params;
mod tape;

use std::fmt::Debug;

use num_traits::Float;

use crate::cube::{Mosaic, SpectralCube};
use crate::error::{Error, Result};

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    TrainProgress, CHECKPOINT_MAGIC,
};
pub use network::{forward, record_network, NetworkReconstructor, PseudoInverse, Reconstructor};
pub use optim::{AdamConfig, OptimState};
pub use params::{ArchConfig, ConvLayer, Gradients, LayerSpec, ReconstructorParams};
pub use tape::{Graph, LinearMap, NodeId};

/// Floating-point scalar with a matrix-multiply kernel.
pub trait Real: Float + Debug + Send + Sync + 'static {
    /// `c = alpha * op(a) * op(b) + beta * c` on row-major buffers where
    /// `op(a)` is `m x k` and `op(b)` is `k x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_transposed: bool,
        b: &[Self],
        b_transposed: bool,
        beta: Self,
        c: &mut [Self],
    );
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    // logical (rows x cols) view of a row-major buffer, possibly transposed
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_real {
    ($t:ty, $kernel:path) => {
        impl Real for $t {
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_transposed: bool,
                b: &[Self],
                b_transposed: bool,
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                let (rsa, csa) = strides(m, k, a_transposed);
                let (rsb, csb) = strides(k, n, b_transposed);
                // SAFETY: the asserts above bound every index the kernel
                // touches for the given dimensions and strides.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_real!(f32, matrixmultiply::sgemm);
impl_real!(f64, matrixmultiply::dgemm);

/// Planar `C x H x W` buffer used on the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::zero(); channels * height * width],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            channels: 1,
            height: 1,
            width: 1,
            data: vec![value],
        }
    }

    pub fn from_cube(x: &SpectralCube) -> Self {
        Self {
            channels: x.channels(),
            height: x.height(),
            width: x.width(),
            data: x.data().iter().map(|&v| T::from(v).unwrap()).collect(),
        }
    }

    pub fn from_mosaic(y: &Mosaic) -> Self {
        Self {
            channels: 1,
            height: y.height(),
            width: y.width(),
            data: y.data().iter().map(|&v| T::from(v).unwrap()).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }

    pub fn to_cube(&self) -> Result<SpectralCube> {
        let data = self
            .data
            .iter()
            .map(|v| v.to_f32().unwrap_or(f32::NAN))
            .collect();
        SpectralCube::from_vec(self.height, self.width, self.channels, data)
    }

    pub fn to_mosaic(&self) -> Result<Mosaic> {
        if self.channels != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                actual: self.channels,
            });
        }
        let data = self
            .data
            .iter()
            .map(|v| v.to_f32().unwrap_or(f32::NAN))
            .collect();
        Mosaic::from_vec(self.height, self.width, data)
    }
}
