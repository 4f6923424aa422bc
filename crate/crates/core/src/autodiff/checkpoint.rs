//! Parameter checkpoint file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "PEFDW1"                       6-byte magic
//! u32 L                          number of layers
//! L x (u32 in, u32 out, u32 k)   layer specs
//! L x (f32 weight[out*in*k*k], f32 bias[out])
//!                                weights stored [out][in][ky][kx]
//! optional training trailer:
//!   "ADAM"
//!   u32 epochs_done
//!   u64 step
//!   f64 beta1, f64 beta2, f64 eps
//!   u64 N, f64 m[N], f64 v[N]
//!   u32 E, f64 epoch_loss[E]
//! ```

use std::path::Path;

use crate::binio::{put_f32s, put_f64s, put_u32, put_u64, read_file, write_file_atomic, Reader};
use crate::error::{Error, Result};

use super::optim::{AdamConfig, OptimState};
use super::params::{ConvLayer, LayerSpec, ReconstructorParams};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"PEFDW1";
const TRAILER_MAGIC: &[u8; 4] = b"ADAM";

/// Optimizer state needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainProgress {
    pub epochs_done: u32,
    pub optim: OptimState,
    pub epoch_losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ReconstructorParams<f32>,
    pub progress: Option<TrainProgress>,
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + ckpt.params.len() * 4);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let layers = ckpt.params.layers();
    put_u32(&mut out, layers.len() as u32);
    for l in layers {
        put_u32(&mut out, l.spec.in_channels as u32);
        put_u32(&mut out, l.spec.out_channels as u32);
        put_u32(&mut out, l.spec.kernel as u32);
    }
    for l in layers {
        put_f32s(&mut out, &l.weight);
        put_f32s(&mut out, &l.bias);
    }
    if let Some(p) = &ckpt.progress {
        out.extend_from_slice(TRAILER_MAGIC);
        put_u32(&mut out, p.epochs_done);
        put_u64(&mut out, p.optim.step);
        put_f64s(
            &mut out,
            &[
                p.optim.config.beta1,
                p.optim.config.beta2,
                p.optim.config.eps,
            ],
        );
        put_u64(&mut out, p.optim.m.len() as u64);
        put_f64s(&mut out, &p.optim.m);
        put_f64s(&mut out, &p.optim.v);
        put_u32(&mut out, p.epoch_losses.len() as u32);
        put_f64s(&mut out, &p.epoch_losses);
    }
    out
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(path, bytes);
    if bytes.len() < CHECKPOINT_MAGIC.len() || r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic(path.to_path_buf()));
    }
    let n = r.u32()? as usize;
    if n == 0 || n > 4096 {
        return Err(Error::Parse(format!("implausible layer count {n}")));
    }
    let mut specs = Vec::with_capacity(n);
    for _ in 0..n {
        let (i, o, k) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
        specs.push(LayerSpec {
            in_channels: i,
            out_channels: o,
            kernel: k,
        });
    }
    let mut layers = Vec::with_capacity(n);
    for spec in specs {
        let weight = r.f32s(spec.weight_len())?;
        let bias = r.f32s(spec.out_channels)?;
        layers.push(ConvLayer { spec, weight, bias });
    }
    let params = ReconstructorParams::from_layers(layers)?;
    if !params.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters"));
    }
    let progress = if r.remaining() == 0 {
        None
    } else {
        if r.take(TRAILER_MAGIC.len())? != TRAILER_MAGIC {
            return Err(Error::Parse("unrecognized checkpoint trailer".into()));
        }
        let epochs_done = r.u32()?;
        let step = r.u64()?;
        let config = AdamConfig {
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        };
        let len = r.u64()? as usize;
        if len != params.len() {
            return Err(Error::shape(params.len(), len));
        }
        let m = r.f64s(len)?;
        let v = r.f64s(len)?;
        let e = r.u32()? as usize;
        let epoch_losses = r.f64s(e)?;
        Some(TrainProgress {
            epochs_done,
            optim: OptimState { config, step, m, v },
            epoch_losses,
        })
    };
    if r.remaining() != 0 {
        return Err(Error::Parse(format!(
            "{} trailing bytes in checkpoint",
            r.remaining()
        )));
    }
    Ok(Checkpoint { params, progress })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_file_atomic(path, &encode_checkpoint(ckpt))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(path, &read_file(path)?)
}
