//! Coarse-to-fine gradient fitting of QTT cores to an image.
//!
//! The fit starts on the image average-pooled by `l` levels. At each
//! scheduled iteration the current train is prolonged one resolution up and
//! the target switches to the next finer pooled image, until the full
//! resolution is reached.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{structure, Result, TnpError};
use crate::image::{avgpool, ImageGrid};
use crate::metrics::{psnr, ssim};
use crate::optim::{backtracking_step, check_divergence, StepReport, TrackedTt};
use crate::qtt::{dequantize_plane, prolong_image, quantize_channel, QuantizedTensor};
use crate::rng::stream_rng;
use crate::tensor::{TtCore, TtFormat};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Final resolution index `D`; images are `2^D × 2^D`.
    pub resolution: usize,
    /// Number of coarse levels `l`; fitting starts at `D − l`.
    pub coarse_levels: usize,
    /// Total iterations `T` across all levels.
    pub iterations: usize,
    /// Iterations `(t₁, …, t_l)` at which the train is prolonged. Evenly
    /// spaced over `T` when absent.
    pub upsample_iters: Option<Vec<usize>>,
    pub max_rank: usize,
    /// Step size `β` in per-entry units: a step moves each core by
    /// `β · ∂(½‖y − x‖²)/∂core`. Backtracking halves it on a loss increase.
    pub learn_rate: f64,
    /// Cores start i.i.d. uniform in `[−init_scale, init_scale]`.
    pub init_scale: f64,
    /// Relative tolerance used when rounding after prolongation.
    pub round_tol: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            resolution: 8,
            coarse_levels: 3,
            iterations: 400,
            upsample_iters: None,
            max_rank: 64,
            learn_rate: 1.0,
            init_scale: 0.2,
            round_tol: 0.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution > 12 {
            return Err(TnpError::Config(format!(
                "resolution {} must be in 1..=12",
                self.resolution
            )));
        }
        if self.coarse_levels >= self.resolution {
            return Err(TnpError::Config(format!(
                "coarse_levels {} must be below resolution {}",
                self.coarse_levels, self.resolution
            )));
        }
        if self.max_rank == 0 {
            return Err(TnpError::Config("max_rank must be positive".into()));
        }
        if !(self.learn_rate.is_finite() && self.learn_rate > 0.0) {
            return Err(TnpError::Config("learn_rate must be positive".into()));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(TnpError::Config("init_scale must be nonnegative".into()));
        }
        if !(self.round_tol.is_finite() && self.round_tol >= 0.0) {
            return Err(TnpError::Config("round_tol must be nonnegative".into()));
        }
        let schedule = self.schedule();
        if schedule.len() != self.coarse_levels {
            return Err(TnpError::Config(format!(
                "{} upsampling iterations given for {} coarse levels",
                schedule.len(),
                self.coarse_levels
            )));
        }
        let mut prev = 0;
        for &t in &schedule {
            if t <= prev || t > self.iterations {
                return Err(TnpError::Config(format!(
                    "upsampling iterations {schedule:?} must increase strictly within 1..={}",
                    self.iterations
                )));
            }
            prev = t;
        }
        Ok(())
    }

    /// Upsampling iterations `(t₁, …, t_l)`, 1-based.
    pub fn schedule(&self) -> Vec<usize> {
        match &self.upsample_iters {
            Some(s) => s.clone(),
            None => {
                let l = self.coarse_levels;
                (1..=l).map(|k| (k * self.iterations / (l + 1)).max(k)).collect()
            }
        }
    }
}

/// Per-level summary of a fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelTrace {
    pub resolution: usize,
    /// First iteration (1-based) spent at this level.
    pub first_iter: usize,
    pub iterations: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct FitTrace {
    /// `½·MSE` after every iteration, averaged over channels.
    pub losses: Vec<f64>,
    pub levels: Vec<LevelTrace>,
}

/// One tensor train per channel, all at the same resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct QttImage {
    resolution: usize,
    channels: Vec<TtFormat>,
}

impl QttImage {
    pub fn new(resolution: usize, channels: Vec<TtFormat>) -> Result<Self> {
        if channels.is_empty() {
            return Err(structure("a QTT image needs at least one channel"));
        }
        for tt in &channels {
            if tt.order() != resolution || tt.modes().iter().any(|&n| n != 4) {
                return Err(structure(format!(
                    "channel train with modes {:?} does not match resolution {resolution}",
                    tt.modes()
                )));
            }
        }
        Ok(Self { resolution, channels })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> &[TtFormat] {
        &self.channels
    }

    /// Reconstructed image (not clamped).
    pub fn to_image(&self) -> Result<ImageGrid> {
        let n = 1usize << self.resolution;
        let planes = self
            .channels
            .iter()
            .map(|tt| Ok(dequantize_plane(TrackedTt::new(tt.clone()).values(), self.resolution)))
            .collect::<Result<Vec<_>>>()?;
        ImageGrid::from_planes(n, n, planes)
    }

    pub fn num_params(&self) -> usize {
        self.channels.iter().map(TtFormat::num_params).sum()
    }
}

/// Rank bound of bond `k` for an order-`d` train with mode size 4.
pub fn rank_bound(d: usize, k: usize, max_rank: usize) -> usize {
    let pow4 = |e: usize| 4usize.checked_pow(e as u32).unwrap_or(usize::MAX);
    pow4(k).min(pow4(d - k)).min(max_rank)
}

/// Random order-`d` train with mode size 4 and the largest admissible ranks.
pub fn init_cores(d: usize, max_rank: usize, init_scale: f64, seed: u64) -> Result<TtFormat> {
    init_cores_stream(d, max_rank, init_scale, seed, 0)
}

pub(crate) fn init_cores_stream(
    d: usize,
    max_rank: usize,
    init_scale: f64,
    seed: u64,
    stream: u64,
) -> Result<TtFormat> {
    if d == 0 {
        return Err(TnpError::Range("initialization needs d >= 1".into()));
    }
    if max_rank == 0 {
        return Err(TnpError::Range("max_rank must be positive".into()));
    }
    let mut rng = stream_rng(seed, stream);
    let ranks: Vec<usize> = (0..=d).map(|k| rank_bound(d, k, max_rank)).collect();
    let cores = (0..d)
        .map(|k| {
            let len = ranks[k] * 4 * ranks[k + 1];
            let data = if init_scale == 0.0 {
                vec![0.0; len]
            } else {
                (0..len).map(|_| rng.random_range(-init_scale..=init_scale)).collect()
            };
            TtCore::new(ranks[k], 4, ranks[k + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    TtFormat::new(cores)
}

fn half_mse(y: &[f64], x: &[f64]) -> f64 {
    0.5 * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// One gradient step on `½·MSE(contract(tt), target)` with backtracking.
///
/// The step moves the cores by `β · n · ∇(½·MSE)`, i.e. `β` times the
/// gradient of the summed squared error.
pub fn gd_step(tt: &TtFormat, target: &QuantizedTensor, beta: f64) -> Result<(TtFormat, StepReport)> {
    if tt.modes() != target.tensor().shape() {
        return Err(structure(format!(
            "train modes {:?} do not match target {:?}",
            tt.modes(),
            target.tensor().shape()
        )));
    }
    let mut state = TrackedTt::new(tt.clone());
    let report = mse_step(&mut state, target.tensor().data(), beta)?;
    Ok((state.tt, report))
}

fn mse_step(state: &mut TrackedTt, target: &[f64], beta: f64) -> Result<StepReport> {
    let before = half_mse(state.values(), target);
    let residual: Vec<f64> = state.values().iter().zip(target).map(|(y, x)| y - x).collect();
    let grads = state.pullback(residual)?;
    backtracking_step(state, &grads, beta, before, |y| half_mse(y, target))
}

/// Step-size controller shared by the fitting loops: the accepted step is
/// carried over and allowed to grow back toward the configured rate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepSize {
    max: f64,
    current: f64,
}

impl StepSize {
    pub fn new(max: f64) -> Self {
        Self { max, current: max }
    }

    pub fn get(&self) -> f64 {
        self.current
    }

    pub fn update(&mut self, report: &StepReport) {
        if report.moved {
            self.current = (report.beta * 2.0).min(self.max);
        }
    }
}

fn target_plane(img: &ImageGrid, levels: usize, channel: usize) -> Result<Vec<f64>> {
    let pooled = avgpool(img, levels)?;
    Ok(quantize_channel(&pooled, channel)?.into_tensor().into_data())
}

fn level_summary(
    img: &ImageGrid,
    d: usize,
    trains: &[TrackedTt],
    first_iter: usize,
    iterations: usize,
    seconds: f64,
) -> Result<LevelTrace> {
    let n = 1usize << d;
    let planes = trains.iter().map(|t| dequantize_plane(t.values(), d)).collect();
    let rec = ImageGrid::from_planes(n, n, planes)?;
    let target = avgpool(img, img.resolution_index().unwrap_or(d) - d)?;
    Ok(LevelTrace {
        resolution: d,
        first_iter,
        iterations,
        psnr: psnr(&target, &rec)?,
        ssim: ssim(&target, &rec)?.value,
        seconds,
    })
}

/// Coarse-to-fine fit of every channel of a `2^D × 2^D` image.
pub fn putt_fit(img: &ImageGrid, cfg: &FitConfig) -> Result<(QttImage, FitTrace)> {
    cfg.validate()?;
    if img.resolution_index() != Some(cfg.resolution) {
        return Err(structure(format!(
            "{}x{} image does not have resolution {}",
            img.height(),
            img.width(),
            cfg.resolution
        )));
    }
    let big_d = cfg.resolution;
    let channels = img.channels();
    let schedule = cfg.schedule();
    let mut d = big_d - cfg.coarse_levels;

    let mut trains = (0..channels)
        .map(|c| init_cores_stream(d, cfg.max_rank, cfg.init_scale, cfg.seed, c as u64).map(TrackedTt::new))
        .collect::<Result<Vec<_>>>()?;
    let mut targets = (0..channels)
        .map(|c| target_plane(img, big_d - d, c))
        .collect::<Result<Vec<_>>>()?;
    let mut steps = vec![StepSize::new(cfg.learn_rate); channels];
    let initial: Vec<f64> = trains
        .iter()
        .zip(&targets)
        .map(|(t, x)| half_mse(t.values(), x))
        .collect();

    let mut trace = FitTrace::default();
    let mut level_start = Instant::now();
    let mut level_first = 1;

    for t in 1..=cfg.iterations {
        if schedule.contains(&t) {
            trace.levels.push(level_summary(
                img,
                d,
                &trains,
                level_first,
                t - level_first,
                level_start.elapsed().as_secs_f64(),
            )?);
            level_start = Instant::now();
            level_first = t;
            d += 1;
            for (c, state) in trains.iter_mut().enumerate() {
                *state = TrackedTt::new(prolong_image(&state.tt, cfg.max_rank, cfg.round_tol)?.balanced());
                targets[c] = target_plane(img, big_d - d, c)?;
            }
        }
        let mut total = 0.0;
        for c in 0..channels {
            let report = mse_step(&mut trains[c], &targets[c], steps[c].get())?;
            steps[c].update(&report);
            check_divergence(report.loss_after, initial[c], steps[c].get())?;
            total += report.loss_after;
        }
        trace.losses.push(total / channels as f64);
    }
    trace.levels.push(level_summary(
        img,
        d,
        &trains,
        level_first,
        cfg.iterations + 1 - level_first,
        level_start.elapsed().as_secs_f64(),
    )?);
    debug_assert_eq!(d, big_d);
    let qtt = QttImage::new(d, trains.into_iter().map(|s| s.tt).collect())?;
    Ok((qtt, trace))
}
