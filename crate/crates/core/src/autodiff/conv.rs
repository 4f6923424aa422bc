//! Same-padded 2-D convolution (cross-correlation) via im2col + GEMM.

use super::params::ConvLayer;
use super::{Real, Tensor};

/// Unfolds `x` into a `(C_in k k) x (H W)` matrix with zero padding.
fn im2col<T: Real>(x: &Tensor<T>, k: usize) -> Vec<T> {
    let (c_in, h, w) = x.shape();
    let plane = h * w;
    let r = (k / 2) as isize;
    let mut col = vec![T::zero(); c_in * k * k * plane];
    for ci in 0..c_in {
        let src = &x.data[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            let dy = ky as isize - r;
            for kx in 0..k {
                let dx = kx as isize - r;
                let row = ((ci * k + ky) * k + kx) * plane;
                let dst = &mut col[row..row + plane];
                let (w_lo, w_hi) = (
                    (-dx).max(0) as usize,
                    (w as isize - dx).clamp(0, w as isize) as usize,
                );
                for oh in 0..h {
                    let sh = oh as isize + dy;
                    if sh < 0 || sh >= h as isize || w_lo >= w_hi {
                        continue;
                    }
                    let s0 = sh as usize * w;
                    let d0 = oh * w;
                    let src_lo = (w_lo as isize + dx) as usize;
                    let n = w_hi - w_lo;
                    dst[d0 + w_lo..d0 + w_hi].copy_from_slice(&src[s0 + src_lo..s0 + src_lo + n]);
                }
            }
        }
    }
    col
}

/// Folds a column-gradient back onto the input, accumulating.
fn col2im<T: Real>(col: &[T], grad: &mut Tensor<T>, k: usize) {
    let (c_in, h, w) = grad.shape();
    let plane = h * w;
    let r = (k / 2) as isize;
    for ci in 0..c_in {
        let dst = &mut grad.data[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            let dy = ky as isize - r;
            for kx in 0..k {
                let dx = kx as isize - r;
                let row = ((ci * k + ky) * k + kx) * plane;
                let src = &col[row..row + plane];
                let (w_lo, w_hi) = (
                    (-dx).max(0) as usize,
                    (w as isize - dx).clamp(0, w as isize) as usize,
                );
                for oh in 0..h {
                    let sh = oh as isize + dy;
                    if sh < 0 || sh >= h as isize || w_lo >= w_hi {
                        continue;
                    }
                    let s0 = sh as usize * w;
                    let d0 = oh * w;
                    let dst_lo = (w_lo as isize + dx) as usize;
                    for (o, &g) in dst[s0 + dst_lo..s0 + dst_lo + (w_hi - w_lo)]
                        .iter_mut()
                        .zip(&src[d0 + w_lo..d0 + w_hi])
                    {
                        *o = *o + g;
                    }
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Real>(layer: &ConvLayer<T>, x: &Tensor<T>) -> Tensor<T> {
    let spec = layer.spec;
    let plane = x.plane();
    let col = im2col(x, spec.kernel);
    let mut out = Tensor::zeros(spec.out_channels, x.height, x.width);
    for (co, chunk) in out.data.chunks_mut(plane).enumerate() {
        chunk.iter_mut().for_each(|v| *v = layer.bias[co]);
    }
    T::gemm(
        spec.out_channels,
        spec.fan_in(),
        plane,
        &layer.weight,
        false,
        &col,
        false,
        T::one(),
        &mut out.data,
    );
    out
}

/// Accumulates weight/bias gradients and optionally returns the input
/// gradient.
pub(crate) fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    grad_layer: &mut ConvLayer<T>,
    need_input_grad: bool,
) -> Option<Tensor<T>> {
    let spec = layer.spec;
    let plane = x.plane();
    let col = im2col(x, spec.kernel);
    // dW += dOut (C_out x HW) . col^T (HW x C_in k k)
    T::gemm(
        spec.out_channels,
        plane,
        spec.fan_in(),
        &grad_out.data,
        false,
        &col,
        true,
        T::one(),
        &mut grad_layer.weight,
    );
    for (co, chunk) in grad_out.data.chunks(plane).enumerate() {
        let s = chunk.iter().fold(T::zero(), |acc, &v| acc + v);
        grad_layer.bias[co] = grad_layer.bias[co] + s;
    }
    if !need_input_grad {
        return None;
    }
    // dCol = W^T (C_in k k x C_out) . dOut (C_out x HW)
    let mut dcol = col;
    T::gemm(
        spec.fan_in(),
        spec.out_channels,
        plane,
        &layer.weight,
        true,
        &grad_out.data,
        false,
        T::zero(),
        &mut dcol,
    );
    let mut grad_in = Tensor::zeros(x.channels, x.height, x.width);
    col2im(&dcol, &mut grad_in, spec.kernel);
    Some(grad_in)
}
