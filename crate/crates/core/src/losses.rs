//! Training objectives and the training loop.
//!
//! Every loss is mean-reduced: the measurement-consistency term over the
//! `H·W` mosaic pixels, the equivariance and supervised terms over all
//! entries of the compared cubes (restricted to warp-valid pixels for the
//! perspective transform).

use std::str::FromStr;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::autodiff::{
    AdamConfig, ArchConfig, Graph, LinearMap, NetworkReconstructor, NodeId, OptimState, Real,
    Reconstructor, ReconstructorParams, Tensor, TrainProgress,
};
use crate::cube::{Mosaic, SpectralCube, ValidityMask};
use crate::error::{Error, Result};
use crate::geometry::{sample_transform, Homography, TransformSamplerConfig, WarpPlan};
use crate::interp::{gaussian_kernel, InterpConfig, InterpMethod, NormalizedConvolution};
use crate::msfa::{MosaicOperator, MsfaPattern};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mc,
    EiPerspective,
    EiShift,
    Supervised,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(LossKind::Mc),
            "ei_perspective" | "ei-perspective" | "ei" => Ok(LossKind::EiPerspective),
            "ei_shift" | "ei-shift" => Ok(LossKind::EiShift),
            "supervised" => Ok(LossKind::Supervised),
            other => Err(Error::InvalidArgument(format!(
                "unknown loss kind '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub kind: LossKind,
    pub alpha: f64,
    /// Angle ranges for the perspective arm; `None` uses
    /// [`TransformSamplerConfig::for_image`] for each image size.
    pub sampler: Option<TransformSamplerConfig>,
    /// Largest shift magnitude for the shift arm; `None` means one period.
    pub shift_max: Option<usize>,
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            alpha: 0.1,
            sampler: None,
            shift_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if let Some(s) = &self.sampler {
            s.validate()?;
        }
        if self.shift_max == Some(0) {
            return Err(Error::InvalidArgument("shift_max must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub arch: ArchConfig,
    pub adam: AdamConfig,
    /// Visit images in a fresh random order each epoch.
    pub shuffle: bool,
}

impl TrainConfig {
    /// 200 epochs at learning rate 1e-5.
    pub fn new(channels: usize) -> Self {
        Self {
            epochs: 200,
            learning_rate: 1e-5,
            seed: 0,
            arch: ArchConfig::new(channels),
            adam: AdamConfig::default(),
            shuffle: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        self.arch.layer_specs().map(|_| ())
    }
}

/// Total loss with its two components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub mc: f64,
    pub equivariance: f64,
}

/// Scalar nodes of a recorded loss.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub mc: NodeId,
    pub equivariance: Option<NodeId>,
}

fn check_mosaic(op: &MosaicOperator, y: &Mosaic) -> Result<()> {
    if y.shape() != (op.height(), op.width()) {
        return Err(Error::shape(
            format!("{}x{}", op.height(), op.width()),
            format!("{}x{}", y.height(), y.width()),
        ));
    }
    Ok(())
}

/// `mean((A x̂ - y)²)` over the `H·W` mosaic pixels.
pub fn mc_loss(xhat: &SpectralCube, y: &Mosaic, op: &MosaicOperator) -> Result<f64> {
    check_mosaic(op, y)?;
    let ax = op.apply(xhat)?;
    let sum: f64 = ax
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / y.data().len() as f64)
}

/// `mean((x̂ - x)²)` over all entries.
pub fn supervised_loss(xhat: &SpectralCube, x_gt: &SpectralCube) -> Result<f64> {
    xhat.check_same_shape(x_gt)?;
    let sum: f64 = xhat
        .data()
        .iter()
        .zip(x_gt.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / xhat.data().len() as f64)
}

/// Records `MC(x₁, y) + α·mean_m((T x₁ - f(A T x₁))²)` where `T` is `transform`
/// and `x₁ = f(y)`.
pub fn record_equivariant_loss<'a, T: Real, R: Reconstructor<T>>(
    graph: &mut Graph<'a, T>,
    f: &'a R,
    y: NodeId,
    op: &'a MosaicOperator,
    transform: LinearMap<'a>,
    mask: Option<&ValidityMask>,
    alpha: f64,
) -> Result<LossNodes> {
    let x1 = f.record(graph, y)?;
    let ax1 = graph.linear(x1, LinearMap::Mosaic(op))?;
    let mc = graph.mean_squared_error(ax1, y, None)?;
    let x2 = graph.linear(x1, transform)?;
    let y2 = graph.linear(x2, LinearMap::Mosaic(op))?;
    let x3 = f.record(graph, y2)?;
    let eq = graph.mean_squared_error(x2, x3, mask)?;
    let total = graph.weighted_sum(&[(mc, 1.0), (eq, alpha)])?;
    Ok(LossNodes {
        total,
        mc,
        equivariance: Some(eq),
    })
}

/// Perspective-equivariant loss for a fixed transform `g`, evaluated in
/// double precision.
pub fn ei_loss<R: Reconstructor<f64>>(
    f: &R,
    y: &Mosaic,
    op: &MosaicOperator,
    g: &Homography,
    alpha: f64,
) -> Result<LossParts> {
    check_mosaic(op, y)?;
    let plan = WarpPlan::new(g, y.height(), y.width())?;
    let mask = plan.mask();
    let mut graph = Graph::new();
    let yi = graph.input(Tensor::from_mosaic(y));
    let nodes = record_equivariant_loss(
        &mut graph,
        f,
        yi,
        op,
        LinearMap::Warp(&plan),
        Some(&mask),
        alpha,
    )?;
    Ok(parts(&graph, &nodes))
}

fn parts<T: Real>(graph: &Graph<'_, T>, nodes: &LossNodes) -> LossParts {
    LossParts {
        total: graph.scalar(nodes.total),
        mc: graph.scalar(nodes.mc),
        equivariance: nodes.equivariance.map_or(0.0, |e| graph.scalar(e)),
    }
}

fn warn_if_uninformative_shift(shift: (isize, isize), period: usize) {
    let c = period as isize;
    if shift.0 % c == 0 && shift.1 % c == 0 {
        warn!(
            "shift ({}, {}) is a multiple of the period {period} in both axes; mosaicing commutes with it and the equivariance term carries no information",
            shift.0, shift.1
        );
    }
}

/// Shift-equivariant loss with a cyclic shift `(dh, dw)`; no mask is needed.
pub fn shift_ei_loss<R: Reconstructor<f64>>(
    f: &R,
    y: &Mosaic,
    op: &MosaicOperator,
    shift: (isize, isize),
    alpha: f64,
) -> Result<LossParts> {
    check_mosaic(op, y)?;
    warn_if_uninformative_shift(shift, op.pattern().period());
    let mut graph = Graph::new();
    let yi = graph.input(Tensor::from_mosaic(y));
    let map = LinearMap::Shift {
        dh: shift.0,
        dw: shift.1,
    };
    let nodes = record_equivariant_loss(&mut graph, f, yi, op, map, None, alpha)?;
    Ok(parts(&graph, &nodes))
}

/// Per-pixel equivariance residual `Σ_c (x₂ - x₃)²`, zero outside `mask`.
pub fn equivariance_residual_map<R: Reconstructor<f64>>(
    f: &R,
    y: &Mosaic,
    op: &MosaicOperator,
    transform: LinearMap<'_>,
    mask: Option<&ValidityMask>,
) -> Result<Vec<f64>> {
    check_mosaic(op, y)?;
    let mut graph = Graph::new();
    let yi = graph.input(Tensor::from_mosaic(y));
    let x1 = f.record(&mut graph, yi)?;
    let x2 = graph.linear(x1, transform)?;
    let y2 = graph.linear(x2, LinearMap::Mosaic(op))?;
    let x3 = f.record(&mut graph, y2)?;
    let (a, b) = (graph.value(x2), graph.value(x3));
    let plane = a.plane();
    let mut out = vec![0.0; plane];
    for (i, (p, q)) in a.data.iter().zip(&b.data).enumerate() {
        if mask.is_none_or(|m| m.data()[i % plane]) {
            out[i % plane] += (p - q) * (p - q);
        }
    }
    Ok(out)
}

/// One training image.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub y: Mosaic,
    pub gt: Option<SpectralCube>,
}

/// The Gaussian-interpolation map used to initialize the reconstructor.
pub fn gaussian_init(op: &MosaicOperator) -> Result<NormalizedConvolution> {
    let cfg = InterpConfig::new(InterpMethod::Gaussian, op.pattern().period());
    NormalizedConvolution::new(op, gaussian_kernel(&cfg)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

struct SizeCache {
    height: usize,
    width: usize,
    op: MosaicOperator,
    init: NormalizedConvolution,
}

/// Stateful trainer; run epochs one at a time to checkpoint in between.
pub struct Trainer<'d> {
    dataset: &'d [TrainSample],
    pattern: MsfaPattern,
    loss: LossConfig,
    config: TrainConfig,
    params: ReconstructorParams<f32>,
    optim: OptimState,
    epochs_done: usize,
    epoch_losses: Vec<f64>,
    cache: Vec<SizeCache>,
    started: Instant,
}

impl<'d> Trainer<'d> {
    pub fn new(
        dataset: &'d [TrainSample],
        pattern: &MsfaPattern,
        loss: LossConfig,
        config: TrainConfig,
        params: ReconstructorParams<f32>,
    ) -> Result<Self> {
        loss.validate()?;
        config.validate()?;
        if dataset.is_empty() {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        let supervised = loss.kind == LossKind::Supervised;
        for (i, s) in dataset.iter().enumerate() {
            match (&s.gt, supervised) {
                (None, true) => {
                    return Err(Error::InvalidArgument(format!(
                        "image {i} has no ground truth"
                    )))
                }
                (Some(gt), true)
                    if gt.shape() != (s.y.height(), s.y.width(), pattern.channels()) =>
                {
                    return Err(Error::shape(
                        format!("{}x{}x{}", s.y.height(), s.y.width(), pattern.channels()),
                        format!("{}x{}x{}", gt.height(), gt.width(), gt.channels()),
                    ));
                }
                _ => {}
            }
        }
        if params.channels() != pattern.channels() {
            return Err(Error::ChannelMismatch {
                expected: pattern.channels(),
                actual: params.channels(),
            });
        }
        let optim = OptimState::new(&params, config.adam);
        Ok(Self {
            dataset,
            pattern: pattern.clone(),
            loss,
            config,
            params,
            optim,
            epochs_done: 0,
            epoch_losses: Vec::new(),
            cache: Vec::new(),
            started: Instant::now(),
        })
    }

    /// Restores optimizer state and epoch count from a checkpoint.
    pub fn resume(&mut self, progress: TrainProgress) -> Result<()> {
        if progress.optim.m.len() != self.params.len() {
            return Err(Error::shape(self.params.len(), progress.optim.m.len()));
        }
        self.optim = progress.optim;
        self.epochs_done = progress.epochs_done as usize;
        self.epoch_losses = progress.epoch_losses;
        Ok(())
    }

    pub fn params(&self) -> &ReconstructorParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ReconstructorParams<f32> {
        self.params
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.config.epochs
    }

    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn progress(&self) -> TrainProgress {
        TrainProgress {
            epochs_done: self.epochs_done as u32,
            optim: self.optim.clone(),
            epoch_losses: self.epoch_losses.clone(),
        }
    }

    fn cache_index(&mut self, height: usize, width: usize) -> Result<usize> {
        if let Some(i) = self
            .cache
            .iter()
            .position(|c| (c.height, c.width) == (height, width))
        {
            return Ok(i);
        }
        let op = MosaicOperator::new(self.pattern.clone(), height, width);
        let init = gaussian_init(&op)?;
        self.cache.push(SizeCache {
            height,
            width,
            op,
            init,
        });
        Ok(self.cache.len() - 1)
    }

    fn sample_shift(&self, rng: &mut Rng) -> (isize, isize) {
        let c = self.pattern.period() as i64;
        let max = self.loss.shift_max.unwrap_or(self.pattern.period()) as i64;
        loop {
            let (dh, dw) = (rng.int_range(-max, max), rng.int_range(-max, max));
            // shifts by whole periods are uninformative
            if dh % c != 0 || dw % c != 0 {
                return (dh as isize, dw as isize);
            }
        }
    }

    fn step(&mut self, image: usize, rng: &mut Rng) -> Result<f64> {
        let sample = &self.dataset[image];
        let (h, w) = sample.y.shape();
        let ci = self.cache_index(h, w)?;
        let cache = &self.cache[ci];
        let f = NetworkReconstructor::new(&self.params, &cache.init)?;
        let plan;
        let mask;
        let transform = match self.loss.kind {
            LossKind::EiPerspective => {
                let sampler = self
                    .loss
                    .sampler
                    .unwrap_or_else(|| TransformSamplerConfig::for_image(h, w));
                let g = sample_transform(rng, &sampler);
                plan = WarpPlan::new(&g, h, w)?;
                mask = plan.mask();
                Some((LinearMap::Warp(&plan), Some(&mask)))
            }
            LossKind::EiShift => {
                let (dh, dw) = self.sample_shift(rng);
                Some((LinearMap::Shift { dh, dw }, None))
            }
            _ => None,
        };
        let mut graph = Graph::<f32>::new();
        let yi = graph.input(Tensor::from_mosaic(&sample.y));
        let loss = match (transform, self.loss.kind) {
            (Some((map, mask)), _) => {
                record_equivariant_loss(&mut graph, &f, yi, &cache.op, map, mask, self.loss.alpha)?
                    .total
            }
            (None, LossKind::Supervised) => {
                let x1 = f.record(&mut graph, yi)?;
                let gt = graph.input(Tensor::from_cube(
                    sample.gt.as_ref().expect("checked in new"),
                ));
                graph.mean_squared_error(x1, gt, None)?
            }
            (None, _) => {
                let x1 = f.record(&mut graph, yi)?;
                let ax1 = graph.linear(x1, LinearMap::Mosaic(&cache.op))?;
                graph.mean_squared_error(ax1, yi, None)?
            }
        };
        let value = graph.scalar(loss);
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch: self.epochs_done + 1,
                image,
            });
        }
        let grads = graph.backward(loss, 1.0)?;
        self.optim
            .step(&mut self.params, &grads, self.config.learning_rate)?;
        Ok(value)
    }

    /// Runs one epoch over the dataset. Randomness is keyed by
    /// `(seed, epoch, image)`, so a resumed run repeats an uninterrupted one.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch_start = Instant::now();
        let epoch_rng = Rng::new(self.config.seed).substream(self.epochs_done as u64);
        let mut order: Vec<usize> = (0..self.dataset.len()).collect();
        if self.config.shuffle {
            let mut r = epoch_rng.substream(u64::MAX);
            for i in (1..order.len()).rev() {
                order.swap(i, r.below(i + 1));
            }
        }
        let mut sum = 0.0;
        for &image in &order {
            let mut rng = epoch_rng.substream(image as u64);
            sum += self.step(image, &mut rng)?;
        }
        let mean_loss = sum / order.len() as f64;
        self.epochs_done += 1;
        self.epoch_losses.push(mean_loss);
        let record = EpochRecord {
            epoch: self.epochs_done,
            mean_loss,
            wall_seconds: epoch_start.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {}/{}: loss {:.6e} ({:.1}s, {:.0}s total)",
            record.epoch,
            self.config.epochs,
            mean_loss,
            record.wall_seconds,
            self.started.elapsed().as_secs_f64()
        );
        Ok(record)
    }
}

/// Trains for `config.epochs` epochs and returns the parameters together
/// with one record per epoch.
pub fn train(
    dataset: &[TrainSample],
    pattern: &MsfaPattern,
    loss: &LossConfig,
    config: &TrainConfig,
    params: ReconstructorParams<f32>,
) -> Result<(ReconstructorParams<f32>, Vec<EpochRecord>)> {
    let mut trainer = Trainer::new(dataset, pattern, *loss, *config, params)?;
    let mut log = Vec::with_capacity(config.epochs);
    while !trainer.is_finished() {
        log.push(trainer.run_epoch()?);
    }
    Ok((trainer.into_params(), log))
}
