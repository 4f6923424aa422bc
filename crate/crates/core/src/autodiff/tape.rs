//! Reverse-mode tape over planar tensors.
//!
//! Nodes are appended in evaluation order, so a reverse sweep visits every
//! node after all of its consumers.

use crate::cube::shift_plane;
use crate::cube::ValidityMask;
use crate::error::{Error, Result};
use crate::geometry::WarpPlan;
use crate::interp::NormalizedConvolution;
use crate::msfa::MosaicOperator;

use super::conv::{conv_backward, conv_forward};
use super::params::{ConvLayer, Gradients, LayerSpec};
use super::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

/// Fixed linear maps that can appear in a loss graph.
#[derive(Clone, Copy, Debug)]
pub enum LinearMap<'a> {
    /// `A`: cube -> mosaic.
    Mosaic(&'a MosaicOperator),
    /// `Aᵀ`: mosaic -> cube.
    MosaicAdjoint(&'a MosaicOperator),
    /// Normalized-convolution interpolation: mosaic -> cube.
    Interpolate(&'a NormalizedConvolution),
    /// Bilinear inverse warp (invalid pixels are zero).
    Warp(&'a WarpPlan),
    /// Cyclic spatial shift by `(dh, dw)`.
    Shift { dh: isize, dw: isize },
}

impl LinearMap<'_> {
    fn output_shape(&self, input: (usize, usize, usize)) -> Result<(usize, usize, usize)> {
        let (c, h, w) = input;
        let check_hw = |eh: usize, ew: usize| {
            if (h, w) == (eh, ew) {
                Ok(())
            } else {
                Err(Error::shape(format!("{eh}x{ew}"), format!("{h}x{w}")))
            }
        };
        let check_c = |expected: usize| {
            if c == expected {
                Ok(())
            } else {
                Err(Error::ChannelMismatch {
                    expected,
                    actual: c,
                })
            }
        };
        match self {
            LinearMap::Mosaic(op) => {
                check_hw(op.height(), op.width())?;
                check_c(op.channels())?;
                Ok((1, h, w))
            }
            LinearMap::MosaicAdjoint(op) => {
                check_hw(op.height(), op.width())?;
                check_c(1)?;
                Ok((op.channels(), h, w))
            }
            LinearMap::Interpolate(nc) => {
                let op = nc.operator();
                check_hw(op.height(), op.width())?;
                check_c(1)?;
                Ok((op.channels(), h, w))
            }
            LinearMap::Warp(plan) => {
                check_hw(plan.height(), plan.width())?;
                Ok(input)
            }
            LinearMap::Shift { .. } => Ok(input),
        }
    }

    fn apply<T: Real>(&self, x: &Tensor<T>, out: &mut Tensor<T>) {
        match self {
            LinearMap::Mosaic(op) => op.apply_slice(&x.data, &mut out.data),
            LinearMap::MosaicAdjoint(op) => op.adjoint_slice(&x.data, &mut out.data),
            LinearMap::Interpolate(nc) => nc.apply_slice(&x.data, &mut out.data),
            LinearMap::Warp(plan) => plan.apply_slice(&x.data, &mut out.data),
            LinearMap::Shift { dh, dw } => {
                let plane = x.plane();
                for (s, d) in x.data.chunks(plane).zip(out.data.chunks_mut(plane)) {
                    shift_plane(s, d, x.height, x.width, *dh, *dw);
                }
            }
        }
    }

    fn adjoint<T: Real>(&self, g: &Tensor<T>, out: &mut Tensor<T>) {
        match self {
            LinearMap::Mosaic(op) => op.adjoint_slice(&g.data, &mut out.data),
            LinearMap::MosaicAdjoint(op) => op.apply_slice(&g.data, &mut out.data),
            LinearMap::Interpolate(nc) => nc.adjoint_slice(&g.data, &mut out.data),
            LinearMap::Warp(plan) => plan.adjoint_slice(&g.data, &mut out.data),
            LinearMap::Shift { dh, dw } => {
                let plane = g.plane();
                for (s, d) in g.data.chunks(plane).zip(out.data.chunks_mut(plane)) {
                    shift_plane(s, d, g.height, g.width, -*dh, -*dw);
                }
            }
        }
    }
}

enum Op<'a, T> {
    Input,
    Conv {
        input: NodeId,
        layer: &'a ConvLayer<T>,
        slot: usize,
    },
    Silu(NodeId),
    Add(NodeId, NodeId),
    Linear(NodeId, LinearMap<'a>),
    /// Mean of `(a - b)²` over the masked pixels and all channels.
    MeanSquaredError {
        a: NodeId,
        b: NodeId,
        mask: Option<Vec<bool>>,
        count: usize,
    },
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node<'a, T> {
    value: Tensor<T>,
    op: Op<'a, T>,
    requires_grad: bool,
}

/// Computation record for one loss evaluation.
pub struct Graph<'a, T: Real> {
    nodes: Vec<Node<'a, T>>,
    slots: Vec<Option<LayerSpec>>,
}

impl<T: Real> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
pub(super) fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<'a, T: Real> Graph<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            slots: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<'a, T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node<'a, T>> {
        self.nodes.get(id.0).ok_or(Error::EmptyTape)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Value of a scalar node as `f64`.
    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.data[0].to_f64().unwrap_or(f64::NAN)
    }

    /// Constant leaf; no gradient is propagated into it.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Input, false)
    }

    /// Convolution with parameters `layer`; gradients land in `slot`.
    pub fn conv(&mut self, input: NodeId, layer: &'a ConvLayer<T>, slot: usize) -> Result<NodeId> {
        let channels = self.node(input)?.value.channels;
        if channels != layer.spec.in_channels {
            return Err(Error::ChannelMismatch {
                expected: layer.spec.in_channels,
                actual: channels,
            });
        }
        if self.slots.len() <= slot {
            self.slots.resize(slot + 1, None);
        }
        match self.slots[slot] {
            Some(spec) if spec != layer.spec => {
                return Err(Error::InvalidArgument(format!(
                    "slot {slot} reused with a different layer shape"
                )))
            }
            _ => self.slots[slot] = Some(layer.spec),
        }
        let value = conv_forward(layer, &self.nodes[input.0].value);
        Ok(self.push(value, Op::Conv { input, layer, slot }, true))
    }

    pub fn silu(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.node(input)?;
        let requires_grad = x.requires_grad;
        let mut value = x.value.clone();
        value.data.iter_mut().for_each(|v| *v = *v * sigmoid(*v));
        Ok(self.push(value, Op::Silu(input), requires_grad))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        if na.value.shape() != nb.value.shape() {
            return Err(Error::shape(
                format!("{:?}", na.value.shape()),
                format!("{:?}", nb.value.shape()),
            ));
        }
        let mut value = na.value.clone();
        for (v, w) in value.data.iter_mut().zip(&nb.value.data) {
            *v = *v + *w;
        }
        let requires_grad = na.requires_grad || nb.requires_grad;
        Ok(self.push(value, Op::Add(a, b), requires_grad))
    }

    pub fn linear(&mut self, input: NodeId, map: LinearMap<'a>) -> Result<NodeId> {
        let x = self.node(input)?;
        let (c, h, w) = map.output_shape(x.value.shape())?;
        let mut value = Tensor::zeros(c, h, w);
        map.apply(&x.value, &mut value);
        let requires_grad = x.requires_grad;
        Ok(self.push(value, Op::Linear(input, map), requires_grad))
    }

    /// Mean squared difference, optionally restricted to the pixels where
    /// `mask` is true (all channels of those pixels count).
    pub fn mean_squared_error(
        &mut self,
        a: NodeId,
        b: NodeId,
        mask: Option<&ValidityMask>,
    ) -> Result<NodeId> {
        let (na, nb) = (self.node(a)?, self.node(b)?);
        let (va, vb) = (&na.value, &nb.value);
        if va.shape() != vb.shape() {
            return Err(Error::shape(
                format!("{:?}", va.shape()),
                format!("{:?}", vb.shape()),
            ));
        }
        let plane = va.plane();
        let mask = match mask {
            Some(m) => {
                if (m.height(), m.width()) != (va.height, va.width) {
                    return Err(Error::shape(
                        format!("{}x{}", va.height, va.width),
                        format!("{}x{}", m.height(), m.width()),
                    ));
                }
                Some(m.data().to_vec())
            }
            None => None,
        };
        let valid = mask
            .as_ref()
            .map_or(plane, |m| m.iter().filter(|&&v| v).count());
        if valid == 0 {
            return Err(Error::EmptyValidRegion);
        }
        let count = valid * va.channels;
        let mut acc = 0.0f64;
        for (i, (x, y)) in va.data.iter().zip(&vb.data).enumerate() {
            if mask.as_ref().is_none_or(|m| m[i % plane]) {
                let d = (*x - *y).to_f64().unwrap();
                acc += d * d;
            }
        }
        let value = Tensor::scalar(T::from(acc / count as f64).unwrap());
        let requires_grad = na.requires_grad || nb.requires_grad;
        Ok(self.push(
            value,
            Op::MeanSquaredError { a, b, mask, count },
            requires_grad,
        ))
    }

    /// `Σ coef_i · term_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> Result<NodeId> {
        let mut acc = 0.0f64;
        let mut requires_grad = false;
        for &(id, coef) in terms {
            let n = self.node(id)?;
            if n.value.data.len() != 1 {
                return Err(Error::InvalidArgument(
                    "weighted_sum expects scalar nodes".into(),
                ));
            }
            acc += coef * n.value.data[0].to_f64().unwrap();
            requires_grad |= n.requires_grad;
        }
        let value = Tensor::scalar(T::from(acc).unwrap());
        Ok(self.push(value, Op::WeightedSum(terms.to_vec()), requires_grad))
    }

    /// Back-propagates `seed · d(loss)` and returns parameter gradients. The
    /// tape is consumed.
    pub fn backward(self, loss: NodeId, seed: f64) -> Result<Gradients<T>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::EmptyTape);
        }
        if self.nodes[loss.0].value.data.len() != 1 {
            return Err(Error::InvalidArgument(
                "backward needs a scalar loss node".into(),
            ));
        }
        let specs: Vec<LayerSpec> = self
            .slots
            .iter()
            .map(|s| {
                s.unwrap_or(LayerSpec {
                    in_channels: 0,
                    out_channels: 0,
                    kernel: 1,
                })
            })
            .collect();
        let mut grads_out = Gradients::zeros_like(&specs);
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::from(seed).unwrap()));

        let nodes = &self.nodes;
        let accumulate = |grads: &mut Vec<Option<Tensor<T>>>, id: NodeId, g: Tensor<T>| {
            if !nodes[id.0].requires_grad {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => {
                    for (a, b) in existing.data.iter_mut().zip(&g.data) {
                        *a = *a + *b;
                    }
                }
                slot => *slot = Some(g),
            }
        };

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Conv { input, layer, slot } => {
                    let x = &nodes[input.0].value;
                    let need = nodes[input.0].requires_grad;
                    if let Some(gx) =
                        conv_backward(layer, x, &g, &mut grads_out.layers[*slot], need)
                    {
                        accumulate(&mut grads, *input, gx);
                    }
                }
                Op::Silu(input) => {
                    let x = &nodes[input.0].value;
                    let mut gx = g;
                    for (gv, &xv) in gx.data.iter_mut().zip(&x.data) {
                        let s = sigmoid(xv);
                        *gv = *gv * s * (T::one() + xv * (T::one() - s));
                    }
                    accumulate(&mut grads, *input, gx);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g);
                }
                Op::Linear(input, map) => {
                    if nodes[input.0].requires_grad {
                        let x = &nodes[input.0].value;
                        let mut gx = Tensor::zeros(x.channels, x.height, x.width);
                        map.adjoint(&g, &mut gx);
                        accumulate(&mut grads, *input, gx);
                    }
                }
                Op::MeanSquaredError { a, b, mask, count } => {
                    let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                    let plane = va.plane();
                    let scale = g.data[0] * T::from(2.0 / *count as f64).unwrap();
                    let mut ga = Tensor::zeros(va.channels, va.height, va.width);
                    for (i, gv) in ga.data.iter_mut().enumerate() {
                        if mask.as_ref().is_none_or(|m| m[i % plane]) {
                            *gv = scale * (va.data[i] - vb.data[i]);
                        }
                    }
                    if nodes[b.0].requires_grad {
                        let mut gb = ga.clone();
                        gb.data.iter_mut().for_each(|v| *v = -*v);
                        accumulate(&mut grads, *b, gb);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::WeightedSum(terms) => {
                    for &(id, coef) in terms {
                        accumulate(
                            &mut grads,
                            id,
                            Tensor::scalar(g.data[0] * T::from(coef).unwrap()),
                        );
                    }
                }
            }
        }
        Ok(grads_out)
    }
}
