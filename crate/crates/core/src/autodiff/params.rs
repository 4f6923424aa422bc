use crate::error::{Error, Result};
use crate::rng::Rng;

use super::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl LayerSpec {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

/// Shape of the residual convolution stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchConfig {
    pub channels: usize,
    pub hidden: usize,
    /// Number of convolution layers (>= 1).
    pub depth: usize,
    pub kernel: usize,
}

impl ArchConfig {
    /// Six 3x3 layers with 48 hidden channels.
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            hidden: 48,
            depth: 6,
            kernel: 3,
        }
    }

    pub fn layer_specs(&self) -> Result<Vec<LayerSpec>> {
        if self.depth == 0 || self.channels == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "invalid architecture: {self:?} (need depth >= 1, channels >= 1, odd kernel)"
            )));
        }
        if self.depth > 1 && self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden width must be >= 1".into()));
        }
        Ok((0..self.depth)
            .map(|i| LayerSpec {
                in_channels: if i == 0 { self.channels } else { self.hidden },
                out_channels: if i + 1 == self.depth {
                    self.channels
                } else {
                    self.hidden
                },
                kernel: self.kernel,
            })
            .collect())
    }
}

/// Weights `[out][in][ky][kx]` and biases of one convolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub spec: LayerSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn zeros(spec: LayerSpec) -> Self {
        Self {
            spec,
            weight: vec![T::zero(); spec.weight_len()],
            bias: vec![T::zero(); spec.out_channels],
        }
    }
}

/// Trainable parameters of the reconstructor.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructorParams<T = f32> {
    layers: Vec<ConvLayer<T>>,
}

impl<T: Real> ReconstructorParams<T> {
    /// Uniform fan-in scaled init for all but the last layer, which starts
    /// at zero so the reconstructor is the identity on its input.
    pub fn init(arch: &ArchConfig, rng: &mut Rng) -> Result<Self> {
        let specs = arch.layer_specs()?;
        let last = specs.len() - 1;
        let layers = specs
            .into_iter()
            .enumerate()
            .map(|(i, spec)| {
                let mut layer = ConvLayer::zeros(spec);
                if i != last {
                    let bound = 1.0 / (spec.fan_in() as f64).sqrt();
                    for w in &mut layer.weight {
                        *w = T::from(rng.uniform_range(-bound, bound)).unwrap();
                    }
                }
                layer
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(arch: &ArchConfig) -> Result<Self> {
        Ok(Self {
            layers: arch
                .layer_specs()?
                .into_iter()
                .map(ConvLayer::zeros)
                .collect(),
        })
    }

    pub fn from_layers(layers: Vec<ConvLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument(
                "reconstructor needs at least one layer".into(),
            ));
        }
        for pair in layers.windows(2) {
            if pair[0].spec.out_channels != pair[1].spec.in_channels {
                return Err(Error::InvalidArgument(format!(
                    "layer shapes do not chain: {:?} -> {:?}",
                    pair[0].spec, pair[1].spec
                )));
            }
        }
        let (first, last) = (&layers[0], &layers[layers.len() - 1]);
        if first.spec.in_channels != last.spec.out_channels {
            return Err(Error::InvalidArgument(
                "first layer input and last layer output channels must match".into(),
            ));
        }
        for l in &layers {
            if l.weight.len() != l.spec.weight_len() || l.bias.len() != l.spec.out_channels {
                return Err(Error::InvalidArgument(format!(
                    "layer buffers do not match {:?}",
                    l.spec
                )));
            }
            if l.spec.kernel % 2 == 0 {
                return Err(Error::InvalidArgument("kernel size must be odd".into()));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn channels(&self) -> usize {
        self.layers[0].spec.in_channels
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec).collect()
    }

    /// Parameter tensors in storage order: weight then bias per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn len(&self) -> usize {
        self.tensors().map(<[T]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalar at flat position `i` across [`tensors`](Self::tensors).
    pub fn get(&self, mut i: usize) -> T {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set(&mut self, mut i: usize, value: T) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn cast<U: Real>(&self) -> ReconstructorParams<U> {
        ReconstructorParams {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    spec: l.spec,
                    weight: l.weight.iter().map(|&v| U::from(v).unwrap()).collect(),
                    bias: l.bias.iter().map(|&v| U::from(v).unwrap()).collect(),
                })
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Gradients with the same layout as [`ReconstructorParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T = f32> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(specs: &[LayerSpec]) -> Self {
        Self {
            layers: specs.iter().copied().map(ConvLayer::zeros).collect(),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn get(&self, mut i: usize) -> T {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("gradient index out of range");
    }

    pub fn len(&self) -> usize {
        self.tensors().map(<[T]>::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += other`
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.iter_mut().zip(&b.weight) {
                *x = *x + *y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + *y;
            }
        }
    }
}
