//! Subcommands of the `pefd` binary.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use pefd::autodiff::{
    read_checkpoint, write_checkpoint, ArchConfig, Checkpoint, NetworkReconstructor, Reconstructor,
    ReconstructorParams,
};
use pefd::dataio::{
    false_rgb, import_band_images, read_cube, read_mosaic, simulate_mosaic, synth_dataset,
    write_cube, write_mosaic, write_png, BandSelection, Manifest, ManifestEntry, RgbScaling,
    SimulationConfig, SynthConfig,
};
use pefd::geometry::{Intrinsics, TransformSamplerConfig};
use pefd::interp::{demosaic, InterpConfig, InterpMethod};
use pefd::losses::{gaussian_init, LossConfig, LossKind, TrainConfig, TrainSample, Trainer};
use pefd::metrics::{evaluate, format_value, MetricConfig, MetricReport};
use pefd::variational::{tv_demosaic, TvConfig};
use pefd::{Mosaic, MosaicOperator, MsfaPattern, Rng, SpectralCube};

#[derive(Debug, Parser)]
#[command(
    name = "pefd",
    version,
    about = "Multispectral demosaicing experiments"
)]
pub struct Cli {
    /// Seed for all random draws.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic scenes and a manifest with a train/test split.
    Synth(SynthArgs),
    /// Simulate mosaiced measurements from cubes.
    Mosaic(MosaicArgs),
    /// Reconstruct cubes from mosaics.
    Demosaic(DemosaicArgs),
    /// Train the reconstruction network.
    Train(TrainArgs),
    /// Compare reconstructions with ground truth.
    Eval(EvalArgs),
    /// Write a false-colour PNG of a cube.
    ExportRgb(ExportArgs),
    /// Stack a directory of per-band grayscale PNGs into a cube file.
    Import(ImportArgs),
}

pub enum Outcome {
    Success,
    /// The command finished but some items failed.
    PartialFailure,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25)]
    count: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 8)]
    shapes: usize,
    /// Background correlation length in pixels.
    #[arg(long, default_value_t = 8.0)]
    smoothness: f64,
}

#[derive(Debug, Args)]
struct MosaicArgs {
    /// Mosaic every scene of a manifest and record the files in it.
    #[arg(long, conflicts_with = "inputs", required_unless_present = "inputs")]
    manifest: Option<PathBuf>,
    /// Cube files to mosaic.
    inputs: Vec<PathBuf>,
    /// Output directory for file inputs.
    #[arg(long, required_unless_present = "manifest")]
    out: Option<PathBuf>,
    #[arg(long)]
    pattern: Option<PathBuf>,
    /// Standard deviation of additive Gaussian noise.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Bilinear,
    Wbilinear,
    Gaussian,
    Tv,
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
struct DemosaicArgs {
    /// Demosaic the mosaics listed in a manifest.
    #[arg(long, conflicts_with = "inputs", required_unless_present = "inputs")]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Mosaic files.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long, required_if_eq("method", "model"))]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    pattern: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// TV weight.
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// TV outer iterations.
    #[arg(long, default_value_t = 300)]
    iters: usize,
    /// TV inner (dual) iterations.
    #[arg(long, default_value_t = 20)]
    inner_iters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Mc,
    #[value(alias = "ei-perspective")]
    Ei,
    EiShift,
    #[value(alias = "supervised")]
    Sup,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Mc => LossKind::Mc,
            LossArg::Ei => LossKind::EiPerspective,
            LossArg::EiShift => LossKind::EiShift,
            LossArg::Sup => LossKind::Supervised,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    loss: LossArg,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    #[arg(long, default_value_t = 1e-5)]
    lr: f64,
    /// Pan half-range in degrees.
    #[arg(long, default_value_t = 5.0)]
    pan_range: f64,
    /// Tilt half-range in degrees.
    #[arg(long, default_value_t = 5.0)]
    tilt_range: f64,
    /// Roll half-range in degrees.
    #[arg(long, default_value_t = 180.0)]
    roll_range: f64,
    /// Focal length in pixels; defaults to the image width.
    #[arg(long)]
    focal: Option<f64>,
    /// Largest shift for the shift-equivariance loss; defaults to the period.
    #[arg(long)]
    shift_max: Option<usize>,
    #[arg(long, default_value_t = 48)]
    hidden: usize,
    #[arg(long, default_value_t = 6)]
    depth: usize,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long)]
    pattern: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Debug)]
struct Recon {
    method: String,
    dir: PathBuf,
}

fn parse_recon(s: &str) -> std::result::Result<Recon, String> {
    let (method, dir) = s.split_once('=').ok_or("expected METHOD=DIR")?;
    if method.is_empty() || method.contains(',') {
        return Err(format!("invalid method name '{method}'"));
    }
    Ok(Recon {
        method: method.to_string(),
        dir: PathBuf::from(dir),
    })
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Test)]
    split: Split,
    /// Reconstruction directory for one method, as METHOD=DIR. Files are
    /// matched to scenes by name.
    #[arg(long = "recon", value_parser = parse_recon, required = true)]
    recons: Vec<Recon>,
    /// ERGAS resolution ratio; defaults to one over the pattern period.
    #[arg(long)]
    ratio: Option<f64>,
    #[arg(long)]
    pattern: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    peak: f64,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ScalingArg {
    Minmax,
    Fixed,
}

fn parse_bands(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("'{p}': {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three bands R,G,B".to_string())
}

#[derive(Debug, Args)]
struct ExportArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Bands for red, green and blue; averages thirds of the band axis when
    /// omitted.
    #[arg(long, value_parser = parse_bands)]
    bands: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value_t = ScalingArg::Minmax)]
    scaling: ScalingArg,
}

#[derive(Debug, Args)]
struct ImportArgs {
    dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Sizes the global thread pool from `PEFD_THREADS`.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("PEFD_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| anyhow!("PEFD_THREADS must be a positive integer, got '{v}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let seed = cli.seed;
    match cli.command {
        Command::Synth(a) => cmd_synth(a, seed),
        Command::Mosaic(a) => cmd_mosaic(a, seed),
        Command::Demosaic(a) => cmd_demosaic(a),
        Command::Train(a) => cmd_train(a, seed),
        Command::Eval(a) => cmd_eval(a),
        Command::ExportRgb(a) => cmd_export(a),
        Command::Import(a) => cmd_import(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

/// Reads a pattern file, or picks the sequential pattern whose band count
/// matches `channels`.
fn load_pattern(path: Option<&Path>, channels: Option<usize>) -> Result<MsfaPattern> {
    let pattern = match path {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("cannot read pattern {}", p.display()))?
            .parse::<MsfaPattern>()
            .with_context(|| format!("invalid pattern {}", p.display()))?,
        None => match channels {
            Some(c) => {
                let period = (c as f64).sqrt().round() as usize;
                if period * period != c {
                    bail!("{c} bands is not a square; pass --pattern");
                }
                MsfaPattern::sequential(period)?
            }
            None => MsfaPattern::default(),
        },
    };
    if let Some(c) = channels {
        if pattern.channels() != c {
            bail!(
                "pattern has {} bands but the data has {c}",
                pattern.channels()
            );
        }
    }
    Ok(pattern)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn entries(manifest: &Manifest, split: Split) -> Vec<&ManifestEntry> {
    match split {
        Split::Train => manifest.train.iter().collect(),
        Split::Test => manifest.test.iter().collect(),
        Split::All => manifest.train.iter().chain(&manifest.test).collect(),
    }
}

fn file_stem(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| anyhow!("cannot derive a name from {}", p.display()))
}

fn cmd_synth(a: SynthArgs, seed: u64) -> Result<Outcome> {
    let cfg = SynthConfig {
        count: a.count,
        height: a.height,
        width: a.width,
        channels: a.channels,
        smoothness: a.smoothness,
        n_shapes: a.shapes,
        seed,
        ..SynthConfig::default()
    };
    if cfg.count == 0 {
        bail!("--count must be >= 1");
    }
    let cubes_dir = a.out.join("cubes");
    create_dir(&cubes_dir)?;
    let scenes = synth_dataset(&cfg)?;
    let mut all = Vec::with_capacity(scenes.len());
    for (i, x) in scenes.iter().enumerate() {
        let name = format!("scene_{i:03}");
        let rel = PathBuf::from("cubes").join(format!("{name}.msic"));
        write_cube(&a.out.join(&rel), x)?;
        all.push(ManifestEntry {
            name,
            cube: rel,
            mosaic: None,
        });
    }
    let test = all.split_off(Manifest::train_count(all.len()));
    let manifest = Manifest {
        seed,
        height: cfg.height,
        width: cfg.width,
        channels: cfg.channels,
        train: all,
        test,
    };
    manifest.write(&a.out.join("manifest.json"))?;
    info!(
        "wrote {} scenes ({} train, {} test) to {}",
        scenes.len(),
        manifest.train.len(),
        manifest.test.len(),
        a.out.display()
    );
    Ok(Outcome::Success)
}

fn cmd_mosaic(a: MosaicArgs, seed: u64) -> Result<Outcome> {
    let base = Rng::new(seed);
    if let Some(mpath) = &a.manifest {
        let mut manifest = Manifest::read(mpath)?;
        let root = manifest_dir(mpath);
        let cfg = SimulationConfig {
            pattern: load_pattern(a.pattern.as_deref(), Some(manifest.channels))?,
            noise_sigma: a.noise,
        };
        create_dir(&root.join("mosaics"))?;
        let (train, test) = (&mut manifest.train, &mut manifest.test);
        for (i, entry) in train.iter_mut().chain(test.iter_mut()).enumerate() {
            let x = read_cube(&root.join(&entry.cube))?;
            let y = simulate_mosaic(&x, &cfg, &mut base.substream(i as u64))?;
            let rel = PathBuf::from("mosaics").join(format!("{}.msic", entry.name));
            write_mosaic(&root.join(&rel), &y)?;
            entry.mosaic = Some(rel);
        }
        manifest.write(mpath)?;
        return Ok(Outcome::Success);
    }
    let out = a.out.expect("required by clap");
    create_dir(&out)?;
    for (i, input) in a.inputs.iter().enumerate() {
        let x = read_cube(input)?;
        let cfg = SimulationConfig {
            pattern: load_pattern(a.pattern.as_deref(), Some(x.channels()))?,
            noise_sigma: a.noise,
        };
        let y = simulate_mosaic(&x, &cfg, &mut base.substream(i as u64))?;
        write_mosaic(&out.join(format!("{}.msic", file_stem(input)?)), &y)?;
    }
    Ok(Outcome::Success)
}

/// One reconstruction method with everything it needs preloaded.
enum Demosaicer {
    Interp(InterpMethod),
    Tv(TvConfig),
    Model(ReconstructorParams<f32>),
}

impl Demosaicer {
    fn run(&self, y: &Mosaic, pattern: &MsfaPattern) -> Result<SpectralCube> {
        Ok(match self {
            Demosaicer::Interp(method) => {
                demosaic(y, pattern, &InterpConfig::new(*method, pattern.period()))?
            }
            Demosaicer::Tv(cfg) => {
                let op = MosaicOperator::new(pattern.clone(), y.height(), y.width());
                tv_demosaic(y, &op, cfg)?
            }
            Demosaicer::Model(params) => {
                let op = MosaicOperator::new(pattern.clone(), y.height(), y.width());
                let init = gaussian_init(&op)?;
                NetworkReconstructor::new(params, &init)?.reconstruct(y)?
            }
        })
    }
}

fn cmd_demosaic(a: DemosaicArgs) -> Result<Outcome> {
    let method = match a.method {
        Method::Bilinear => Demosaicer::Interp(InterpMethod::Bilinear),
        Method::Wbilinear => Demosaicer::Interp(InterpMethod::WeightedBilinear),
        Method::Gaussian => Demosaicer::Interp(InterpMethod::Gaussian),
        Method::Tv => {
            let cfg = TvConfig {
                lambda: a.lambda,
                outer_iters: a.iters,
                inner_iters: a.inner_iters,
                ..TvConfig::default()
            };
            cfg.validate()?;
            Demosaicer::Tv(cfg)
        }
        Method::Model => {
            let path = a.checkpoint.as_deref().expect("required by clap");
            Demosaicer::Model(read_checkpoint(path)?.params)
        }
    };
    let channels = match &method {
        Demosaicer::Model(p) => Some(p.channels()),
        _ => None,
    };
    let mut jobs: Vec<(String, PathBuf)> = Vec::new();
    let pattern = if let Some(mpath) = &a.manifest {
        let manifest = Manifest::read(mpath)?;
        let root = manifest_dir(mpath);
        for e in entries(&manifest, a.split) {
            let m = e.mosaic.as_ref().ok_or_else(|| {
                anyhow!("scene {} has no mosaic; run `pefd mosaic` first", e.name)
            })?;
            jobs.push((e.name.clone(), root.join(m)));
        }
        load_pattern(a.pattern.as_deref(), Some(manifest.channels))?
    } else {
        for p in &a.inputs {
            jobs.push((file_stem(p)?, p.clone()));
        }
        load_pattern(a.pattern.as_deref(), channels)?
    };
    if let Some(c) = channels {
        if c != pattern.channels() {
            bail!(
                "checkpoint has {c} bands but the pattern has {}",
                pattern.channels()
            );
        }
    }
    create_dir(&a.out)?;
    for (name, path) in jobs {
        let y = read_mosaic(&path)?;
        let x = method
            .run(&y, &pattern)
            .with_context(|| format!("demosaicing {}", path.display()))?;
        write_cube(&a.out.join(format!("{name}.msic")), &x)?;
    }
    Ok(Outcome::Success)
}

/// Settings of a training run, saved next to its checkpoint.
#[derive(Debug, Serialize)]
struct ExperimentConfig<'a> {
    manifest: &'a Path,
    checkpoint: &'a Path,
    loss_log: &'a Path,
    resumed_from: Option<&'a Path>,
    loss: LossKind,
    alpha: f64,
    epochs: u32,
    learning_rate: f64,
    seed: u64,
    pan_range_deg: f64,
    tilt_range_deg: f64,
    roll_range_deg: f64,
    focal: f64,
    shift_max: Option<usize>,
    hidden: usize,
    depth: usize,
    kernel: usize,
    pattern: String,
}

const LOSS_LOG_HEADER: &str = "epoch,mean_loss,wall_seconds";

/// Rows of an existing loss log up to and including `epochs`.
fn kept_log_rows(path: &Path, epochs: usize) -> Result<Vec<String>> {
    let Ok(file) = File::open(path) else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines().skip(1) {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        let epoch: usize = line
            .split(',')
            .next()
            .and_then(|e| e.parse().ok())
            .unwrap_or(usize::MAX);
        if epoch <= epochs {
            rows.push(line);
        }
    }
    Ok(rows)
}

fn arch_of(params: &ReconstructorParams<f32>) -> ArchConfig {
    let specs = params.specs();
    ArchConfig {
        channels: params.channels(),
        hidden: if specs.len() > 1 {
            specs[0].out_channels
        } else {
            0
        },
        depth: specs.len(),
        kernel: specs[0].kernel,
    }
}

fn cmd_train(a: TrainArgs, seed: u64) -> Result<Outcome> {
    let manifest = Manifest::read(&a.manifest)?;
    let root = manifest_dir(&a.manifest);
    let pattern = load_pattern(a.pattern.as_deref(), Some(manifest.channels))?;
    let kind = LossKind::from(a.loss);
    let mut dataset = Vec::with_capacity(manifest.train.len());
    for e in &manifest.train {
        let cube_path = root.join(&e.cube);
        let y = match &e.mosaic {
            Some(m) => read_mosaic(&root.join(m))?,
            None => {
                warn!("scene {} has no mosaic; simulating a noiseless one", e.name);
                let x = read_cube(&cube_path)?;
                MosaicOperator::new(pattern.clone(), x.height(), x.width()).apply(&x)?
            }
        };
        let gt = if kind == LossKind::Supervised {
            Some(read_cube(&cube_path).context("supervised training needs ground-truth cubes")?)
        } else {
            None
        };
        dataset.push(TrainSample { y, gt });
    }

    let intrinsics = match a.focal {
        Some(f) => Intrinsics::new(
            f,
            (manifest.width as f64 - 1.0) / 2.0,
            (manifest.height as f64 - 1.0) / 2.0,
        )?,
        None => Intrinsics::for_image(manifest.height, manifest.width),
    };
    let loss = LossConfig {
        kind,
        alpha: a.alpha,
        sampler: Some(TransformSamplerConfig {
            range_x: a.tilt_range.to_radians(),
            range_y: a.pan_range.to_radians(),
            range_z: a.roll_range.to_radians(),
            intrinsics,
        }),
        shift_max: a.shift_max,
    };

    let resumed = a.resume.as_deref().map(read_checkpoint).transpose()?;
    let (params, progress) = match resumed {
        Some(Checkpoint { params, progress }) => {
            let progress = progress
                .ok_or_else(|| anyhow!("checkpoint has no training state to resume from"))?;
            (params, Some(progress))
        }
        None => {
            let arch = ArchConfig {
                channels: pattern.channels(),
                hidden: a.hidden,
                depth: a.depth,
                kernel: a.kernel,
            };
            // substream kept apart from the per-epoch streams
            let params =
                ReconstructorParams::init(&arch, &mut Rng::new(seed).substream(u64::MAX - 1))?;
            (params, None)
        }
    };
    let arch = arch_of(&params);
    let config = TrainConfig {
        epochs: a.epochs as usize,
        learning_rate: a.lr,
        seed,
        arch,
        ..TrainConfig::new(pattern.channels())
    };

    create_dir(&a.out)?;
    let ckpt_path = a.out.join("model.ckpt");
    let log_path = a.out.join("loss.csv");
    let experiment = ExperimentConfig {
        manifest: &a.manifest,
        checkpoint: &ckpt_path,
        loss_log: &log_path,
        resumed_from: a.resume.as_deref(),
        loss: kind,
        alpha: a.alpha,
        epochs: a.epochs,
        learning_rate: a.lr,
        seed,
        pan_range_deg: a.pan_range,
        tilt_range_deg: a.tilt_range,
        roll_range_deg: a.roll_range,
        focal: intrinsics.focal,
        shift_max: a.shift_max,
        hidden: arch.hidden,
        depth: arch.depth,
        kernel: arch.kernel,
        pattern: pattern.to_string(),
    };
    fs::write(
        a.out.join("config.json"),
        serde_json::to_string_pretty(&experiment)?,
    )
    .with_context(|| format!("cannot write to {}", a.out.display()))?;

    let mut trainer = Trainer::new(&dataset, &pattern, loss, config, params)?;
    if let Some(p) = progress {
        trainer.resume(p)?;
        info!("resuming after epoch {}", trainer.epochs_done());
    }
    let kept = kept_log_rows(&log_path, trainer.epochs_done())?;
    let mut log = OpenOptions::new()
        .create(true)
        .write(true)
        .truncate(true)
        .open(&log_path)
        .with_context(|| format!("cannot write {}", log_path.display()))?;
    writeln!(log, "{LOSS_LOG_HEADER}")?;
    for row in kept {
        writeln!(log, "{row}")?;
    }
    while !trainer.is_finished() {
        let rec = trainer.run_epoch()?;
        writeln!(
            log,
            "{},{:e},{:.3}",
            rec.epoch, rec.mean_loss, rec.wall_seconds
        )?;
        log.flush()?;
        write_checkpoint(
            &ckpt_path,
            &Checkpoint {
                params: trainer.params().clone(),
                progress: Some(trainer.progress()),
            },
        )?;
    }
    if !ckpt_path.exists() {
        // resumed from a finished run
        write_checkpoint(
            &ckpt_path,
            &Checkpoint {
                params: trainer.params().clone(),
                progress: Some(trainer.progress()),
            },
        )?;
    }
    Ok(Outcome::Success)
}

struct EvalRow {
    method: String,
    report: MetricReport,
    scenes: usize,
}

fn mean_report(reports: &[MetricReport]) -> MetricReport {
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    MetricReport {
        psnr: mean(|r| r.psnr),
        ssim: mean(|r| r.ssim),
        sam: mean(|r| r.sam),
        ergas: mean(|r| r.ergas),
    }
}

fn cmd_eval(a: EvalArgs) -> Result<Outcome> {
    let manifest = Manifest::read(&a.manifest)?;
    let root = manifest_dir(&a.manifest);
    let pattern = load_pattern(a.pattern.as_deref(), Some(manifest.channels))?;
    let mut cfg = MetricConfig::for_period(pattern.period());
    cfg.peak = a.peak;
    if let Some(r) = a.ratio {
        cfg.ergas_ratio = r;
    }
    let scenes = entries(&manifest, a.split);
    let mut gts = Vec::with_capacity(scenes.len());
    for e in &scenes {
        gts.push(read_cube(&root.join(&e.cube))?);
    }

    let mut errors = Vec::new();
    let mut rows = Vec::new();
    for recon in &a.recons {
        let mut reports = Vec::new();
        for (e, gt) in scenes.iter().zip(&gts) {
            let path = recon.dir.join(format!("{}.msic", e.name));
            let result = read_cube(&path).and_then(|x| evaluate(&x, gt, &cfg));
            match result {
                Ok(r) => reports.push(r),
                Err(err) => errors.push(format!("{}/{}: {err}", recon.method, e.name)),
            }
        }
        if !reports.is_empty() {
            rows.push(EvalRow {
                method: recon.method.clone(),
                report: mean_report(&reports),
                scenes: reports.len(),
            });
        }
    }

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:<16} {:>10} {:>8} {:>9} {:>9} {:>7}",
        "method", "PSNR[dB]", "SSIM", "SAM[rad]", "ERGAS", "scenes"
    )?;
    for row in &rows {
        let r = &row.report;
        writeln!(
            stdout,
            "{:<16} {:>10} {:>8.4} {:>9.5} {:>9.4} {:>7}",
            row.method,
            if r.psnr.is_finite() {
                format!("{:.3}", r.psnr)
            } else {
                format_value(r.psnr)
            },
            r.ssim,
            r.sam,
            r.ergas,
            row.scenes
        )?;
    }
    if !errors.is_empty() {
        writeln!(stdout, "\nerrors:")?;
        for e in &errors {
            writeln!(stdout, "  {e}")?;
        }
    }
    if let Some(csv) = &a.csv {
        let mut out = String::from("method,psnr_db,ssim,sam_rad,ergas\n");
        for row in &rows {
            let r = &row.report;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.method,
                format_value(r.psnr),
                format_value(r.ssim),
                format_value(r.sam),
                format_value(r.ergas)
            ));
        }
        fs::write(csv, out).with_context(|| format!("cannot write {}", csv.display()))?;
    }
    Ok(if errors.is_empty() {
        Outcome::Success
    } else {
        Outcome::PartialFailure
    })
}

fn cmd_export(a: ExportArgs) -> Result<Outcome> {
    let x = read_cube(&a.input)?;
    let selection = match a.bands {
        Some(b) => BandSelection::Triplet(b),
        None => BandSelection::Average,
    };
    let scaling = match a.scaling {
        ScalingArg::Minmax => RgbScaling::MinMax,
        ScalingArg::Fixed => RgbScaling::Fixed,
    };
    write_png(&a.out, &false_rgb(&x, selection, scaling)?)?;
    Ok(Outcome::Success)
}

fn cmd_import(a: ImportArgs) -> Result<Outcome> {
    let x = import_band_images(&a.dir)?;
    info!("{} bands of {}x{}", x.channels(), x.height(), x.width());
    write_cube(&a.out, &x)?;
    Ok(Outcome::Success)
}
