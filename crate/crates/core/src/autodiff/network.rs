use crate::cube::{Mosaic, SpectralCube};
use crate::error::{Error, Result};
use crate::interp::NormalizedConvolution;
use crate::msfa::MosaicOperator;

use super::conv::conv_forward;
use super::params::ReconstructorParams;
use super::tape::{sigmoid, Graph, LinearMap, NodeId};
use super::{Real, Tensor};

/// A map from a mosaic node to a cube node recorded on a tape.
pub trait Reconstructor<T: Real> {
    fn record<'a>(&'a self, graph: &mut Graph<'a, T>, y: NodeId) -> Result<NodeId>;

    /// Tape-free evaluation.
    fn reconstruct(&self, y: &Mosaic) -> Result<SpectralCube> {
        let mut graph = Graph::new();
        let yi = graph.input(Tensor::from_mosaic(y));
        let out = self.record(&mut graph, yi)?;
        graph.value(out).to_cube()
    }
}

/// `x = Aᵀ y`; has no parameters.
#[derive(Clone, Debug)]
pub struct PseudoInverse {
    pub op: MosaicOperator,
}

impl<T: Real> Reconstructor<T> for PseudoInverse {
    fn record<'a>(&'a self, graph: &mut Graph<'a, T>, y: NodeId) -> Result<NodeId> {
        graph.linear(y, LinearMap::MosaicAdjoint(&self.op))
    }
}

/// Interpolated initialization followed by the residual convolution stack.
#[derive(Clone, Copy, Debug)]
pub struct NetworkReconstructor<'p, T> {
    pub params: &'p ReconstructorParams<T>,
    pub init: &'p NormalizedConvolution,
}

impl<'p, T: Real> NetworkReconstructor<'p, T> {
    pub fn new(
        params: &'p ReconstructorParams<T>,
        init: &'p NormalizedConvolution,
    ) -> Result<Self> {
        let c = init.operator().channels();
        if params.channels() != c {
            return Err(Error::ChannelMismatch {
                expected: params.channels(),
                actual: c,
            });
        }
        Ok(Self { params, init })
    }
}

impl<T: Real> Reconstructor<T> for NetworkReconstructor<'_, T> {
    fn record<'a>(&'a self, graph: &mut Graph<'a, T>, y: NodeId) -> Result<NodeId> {
        let init = graph.linear(y, LinearMap::Interpolate(self.init))?;
        record_network(graph, self.params, init)
    }

    fn reconstruct(&self, y: &Mosaic) -> Result<SpectralCube> {
        let init = self.init.apply(y)?;
        forward(self.params, &init)
    }
}

/// Records `init + net(init)` and returns the output node. Layer `i` writes
/// its gradients to slot `i`.
pub fn record_network<'a, T: Real>(
    graph: &mut Graph<'a, T>,
    params: &'a ReconstructorParams<T>,
    init: NodeId,
) -> Result<NodeId> {
    let layers = params.layers();
    let mut h = init;
    for (i, layer) in layers.iter().enumerate() {
        h = graph.conv(h, layer, i)?;
        if i + 1 < layers.len() {
            h = graph.silu(h)?;
        }
    }
    graph.add(init, h)
}

/// `init + net(init)` without recording a tape.
pub fn forward<T: Real>(
    params: &ReconstructorParams<T>,
    init: &SpectralCube,
) -> Result<SpectralCube> {
    if init.channels() != params.channels() {
        return Err(Error::ChannelMismatch {
            expected: params.channels(),
            actual: init.channels(),
        });
    }
    let x = Tensor::<T>::from_cube(init);
    let layers = params.layers();
    let mut h = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        h = conv_forward(layer, &h);
        if i + 1 < layers.len() {
            h.data.iter_mut().for_each(|v| *v = *v * sigmoid(*v));
        }
    }
    for (o, i) in h.data.iter_mut().zip(&x.data) {
        *o = *o + *i;
    }
    h.to_cube()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::params::ArchConfig;
    use crate::interp::Kernel2d;
    use crate::msfa::MsfaPattern;
    use crate::rng::Rng;

    fn random_cube(rng: &mut Rng, h: usize, w: usize, c: usize) -> SpectralCube {
        SpectralCube::from_fn(h, w, c, |_, _, _| rng.uniform() as f32)
    }

    fn small_arch(c: usize) -> ArchConfig {
        ArchConfig {
            channels: c,
            hidden: 5,
            depth: 2,
            kernel: 3,
        }
    }

    #[test]
    fn zero_weights_give_identity() {
        let mut rng = Rng::new(0);
        let x = random_cube(&mut rng, 7, 5, 4);
        let p = ReconstructorParams::<f32>::zeros(&ArchConfig::new(4)).unwrap();
        assert_eq!(forward(&p, &x).unwrap(), x);
        let p = ReconstructorParams::<f32>::init(&ArchConfig::new(4), &mut rng).unwrap();
        assert_eq!(forward(&p, &x).unwrap(), x);
    }

    #[test]
    fn output_shape_matches_input_and_is_finite() {
        let mut rng = Rng::new(1);
        let arch = small_arch(4);
        let mut p = ReconstructorParams::<f32>::init(&arch, &mut rng).unwrap();
        for l in p.layers_mut() {
            l.weight
                .iter_mut()
                .for_each(|v| *v = rng.normal() as f32 * 0.3);
        }
        for (h, w) in [(1, 1), (3, 9), (8, 8)] {
            let x = random_cube(&mut rng, h, w, 4);
            let out = forward(&p, &x).unwrap();
            assert_eq!(out.shape(), x.shape());
            assert!(out.data().iter().all(|v| v.is_finite()));
        }
        let wrong = random_cube(&mut rng, 4, 4, 3);
        assert!(matches!(
            forward(&p, &wrong),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn recorded_and_direct_forward_agree() {
        let mut rng = Rng::new(2);
        let arch = small_arch(4);
        let mut p = ReconstructorParams::<f32>::init(&arch, &mut rng).unwrap();
        for l in p.layers_mut() {
            l.bias
                .iter_mut()
                .for_each(|v| *v = rng.normal() as f32 * 0.1);
            l.weight
                .iter_mut()
                .for_each(|v| *v = rng.normal() as f32 * 0.2);
        }
        let op = MosaicOperator::new(MsfaPattern::sequential(2).unwrap(), 8, 6);
        let nc = NormalizedConvolution::new(&op, Kernel2d::tent(3).unwrap()).unwrap();
        let y = Mosaic::from_fn(8, 6, |h, w| ((h * 7 + w * 3) % 5) as f32 / 5.0);
        let net = NetworkReconstructor::new(&p, &nc).unwrap();
        let direct = net.reconstruct(&y).unwrap();
        let mut g = Graph::new();
        let yi = g.input(Tensor::from_mosaic(&y));
        let out = net.record(&mut g, yi).unwrap();
        assert_eq!(g.value(out).to_cube().unwrap(), direct);
    }

    #[test]
    fn pseudo_inverse_records_adjoint() {
        let op = MosaicOperator::new(MsfaPattern::sequential(2).unwrap(), 4, 4);
        let y = Mosaic::from_fn(4, 4, |h, w| (h * 4 + w) as f32);
        let pinv = PseudoInverse { op: op.clone() };
        let got = Reconstructor::<f64>::reconstruct(&pinv, &y).unwrap();
        assert_eq!(got, op.adjoint(&y).unwrap());
    }
}
