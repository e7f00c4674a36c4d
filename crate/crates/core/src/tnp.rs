//! Tensor-network purification.
//!
//! The image is fitted by plain coarse-to-fine reconstruction at resolution
//! `D − l`. Every finer resolution `d` then starts from the prolonged train
//! and minimizes
//!
//! ```text
//! ½·mean(x_d − (ŷ + δ*))² + w·½·mean(prior − ŷ)²,
//! δ* = clip(ŷ + δ, 0, 1) − ŷ,  δ = sign-ascent of SSIM(ŷ + δ, x_d), ‖δ‖∞ ≤ η,
//! ```
//!
//! where `prior` is the prolonged reconstruction of the previous level, frozen
//! for the whole stage. `δ*` absorbs the part of `x_d` that a bounded
//! perturbation can explain, so the train is not pulled all the way onto it.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{structure, Result, TnpError};
use crate::image::{avgpool, resize_from_pow2, resize_to_pow2, ImageGrid};
use crate::metrics::ssim_grad;
use crate::optim::{backtracking_step, check_divergence, TrackedTt};
use crate::putt::{putt_fit, FitConfig, FitTrace, QttImage, StepSize};
use crate::qtt::{dequantize_plane, prolong_image, quantize_plane};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PurifyConfig {
    /// Working resolution index `D`.
    pub resolution: usize,
    /// Number of adversarial stages `l`; plain fitting happens at `D − l`.
    pub coarse_levels: usize,
    /// Outer iterations `T` per adversarial stage.
    pub iterations: usize,
    /// Inner sign-ascent steps `N`.
    pub inner_steps: usize,
    /// Inner step scale `α`.
    pub alpha: f64,
    /// Inner ℓ∞ radius `η`.
    pub eta: f64,
    /// Outer step size `β`, in the same per-entry units as the fit.
    pub learn_rate: f64,
    pub max_rank: usize,
    /// Weight of the prior term relative to the data term.
    pub prior_weight: f64,
    pub norm: ObjectiveNorm,
    pub round_tol: f64,
    /// Return an error on the first violated inner-maximization bound.
    pub check_invariants: bool,
    /// Plain fit at resolution `D − l`; its `resolution` is overridden.
    pub fit: FitConfig,
}

impl Default for PurifyConfig {
    fn default() -> Self {
        Self {
            resolution: 8,
            coarse_levels: 1,
            iterations: 100,
            inner_steps: 1,
            alpha: 0.1,
            eta: 0.1,
            learn_rate: 0.5,
            max_rank: 64,
            prior_weight: 1.0,
            norm: ObjectiveNorm::Euclidean,
            round_tol: 0.0,
            check_invariants: false,
            fit: FitConfig {
                resolution: 7,
                ..FitConfig::default()
            },
        }
    }
}

impl PurifyConfig {
    /// Fit configuration actually used for the plain stage.
    pub fn base_fit(&self) -> FitConfig {
        FitConfig {
            resolution: self.resolution - self.coarse_levels,
            ..self.fit.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TnpError::Config(m));
        if self.resolution == 0 || self.resolution > 12 {
            return bad(format!("resolution {} must be in 1..=12", self.resolution));
        }
        if self.coarse_levels >= self.resolution {
            return bad(format!(
                "coarse_levels {} must be below resolution {}",
                self.coarse_levels, self.resolution
            ));
        }
        if self.inner_steps == 0 {
            return bad("inner_steps must be at least 1".into());
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha must be positive".into());
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad("eta must be nonnegative".into());
        }
        if !(self.learn_rate.is_finite() && self.learn_rate > 0.0) {
            return bad("learn_rate must be positive".into());
        }
        if self.max_rank == 0 {
            return bad("max_rank must be positive".into());
        }
        if !(self.prior_weight.is_finite() && self.prior_weight >= 0.0) {
            return bad("prior_weight must be nonnegative".into());
        }
        if !(self.round_tol.is_finite() && self.round_tol >= 0.0) {
            return bad("round_tol must be nonnegative".into());
        }
        self.base_fit().validate()
    }
}

/// Bounded perturbation found by the inner maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerMaxState {
    /// Clipped ascent variable, `‖δ‖∞ ≤ η`.
    pub delta: ImageGrid,
    /// `clip(ŷ + δ, 0, 1) − ŷ`.
    pub delta_star: ImageGrid,
    pub eta: f64,
}

impl InnerMaxState {
    /// Checks `‖δ‖∞ ≤ η` and `ŷ + δ* ∈ [0, 1]`.
    pub fn feasible(&self, y_hat: &ImageGrid) -> bool {
        self.delta.max_abs() <= self.eta
            && y_hat
                .data()
                .iter()
                .zip(self.delta_star.data())
                .all(|(y, d)| (0.0..=1.0).contains(&(y + d)))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `N` steps of `δ ← clip(δ + α·sign(∇ SSIM(ŷ + δ, x_d)), −η, η)` from
/// `δ = 0`, followed by the projection of `ŷ + δ` onto `[0, 1]`.
pub fn inner_maximize(y_hat: &ImageGrid, x_d: &ImageGrid, alpha: f64, eta: f64, steps: usize) -> Result<InnerMaxState> {
    y_hat.check_same_shape(x_d)?;
    let mut delta = y_hat.map(|_| 0.0);
    for _ in 0..steps {
        let probe = y_hat.zip_map(&delta, |y, d| y + d)?;
        let (_, grad) = ssim_grad(&probe, x_d)?;
        delta = delta.zip_map(&grad, |d, g| (d + alpha * sign(g)).clamp(-eta, eta))?;
    }
    let delta_star = y_hat.zip_map(&delta, |y, d| (y + d).clamp(0.0, 1.0) - y)?;
    Ok(InnerMaxState { delta, delta_star, eta })
}

/// Value and image-space gradient (w.r.t. `ŷ`) of the purification loss,
/// with `δ*` held constant.
pub fn purification_loss_and_grad(
    x_d: &ImageGrid,
    y_hat: &ImageGrid,
    delta_star: &ImageGrid,
    prior: &ImageGrid,
) -> Result<(f64, ImageGrid)> {
    weighted_loss_and_grad(x_d, y_hat, delta_star, prior, 1.0)
}

pub fn weighted_loss_and_grad(
    x_d: &ImageGrid,
    y_hat: &ImageGrid,
    delta_star: &ImageGrid,
    prior: &ImageGrid,
    prior_weight: f64,
) -> Result<(f64, ImageGrid)> {
    y_hat.check_same_shape(x_d)?;
    y_hat.check_same_shape(delta_star)?;
    y_hat.check_same_shape(prior)?;
    let n = y_hat.data().len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(y_hat.data().len());
    for i in 0..y_hat.data().len() {
        let fit = y_hat.data()[i] + delta_star.data()[i] - x_d.data()[i];
        let reg = y_hat.data()[i] - prior.data()[i];
        loss += fit * fit + prior_weight * reg * reg;
        grad.push((fit + prior_weight * reg) / n);
    }
    let g = ImageGrid::new_unbounded(y_hat.height(), y_hat.width(), y_hat.channels(), grad)?;
    Ok((0.5 * loss / n, g))
}

/// How the two residuals of the purification loss are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveNorm {
    /// `½·mean(r²)` per term.
    Squared,
    /// `rms(r)` per term (an unsquared ℓ₂ norm scaled by `1/√n`).
    Euclidean,
}

fn rms(r: impl Iterator<Item = f64>, n: usize) -> f64 {
    (r.map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

fn stage_loss(norm: ObjectiveNorm, x: &[f64], y: &[f64], ds: &[f64], p: &[f64], w: f64) -> f64 {
    let n = y.len();
    let fit = (0..n).map(|i| y[i] + ds[i] - x[i]);
    let reg = (0..n).map(|i| y[i] - p[i]);
    match norm {
        ObjectiveNorm::Squared => {
            0.5 * (fit.map(|v| v * v).sum::<f64>() + w * reg.map(|v| v * v).sum::<f64>()) / n as f64
        }
        ObjectiveNorm::Euclidean => rms(fit, n) + w * rms(reg, n),
    }
}

/// `n · ∇` of [`stage_loss`]: per-entry units, so a step of size 1 on the
/// squared objective moves each entry by its full residual.
fn stage_grad(norm: ObjectiveNorm, x: &[f64], y: &[f64], ds: &[f64], p: &[f64], w: f64) -> Vec<f64> {
    let n = y.len();
    let (a, b) = match norm {
        ObjectiveNorm::Squared => (1.0, w),
        ObjectiveNorm::Euclidean => {
            let f = rms((0..n).map(|i| y[i] + ds[i] - x[i]), n);
            let r = rms((0..n).map(|i| y[i] - p[i]), n);
            // A vanishing residual contributes no direction.
            let inv = |v: f64| if v > 0.0 { 1.0 / v } else { 0.0 };
            (inv(f), w * inv(r))
        }
    };
    (0..n).map(|i| a * (y[i] + ds[i] - x[i]) + b * (y[i] - p[i])).collect()
}

/// Per-iteration record of one adversarial stage.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct StageTrace {
    pub resolution: usize,
    pub losses: Vec<f64>,
    /// Largest `‖δ‖∞` seen over all outer iterations.
    pub max_delta: f64,
    /// Outer iterations where `‖δ‖∞ ≤ η` or `ŷ + δ* ∈ [0, 1]` failed.
    pub violations: usize,
    /// First iteration after which no channel moved; every later iteration
    /// would repeat it exactly, so the stage stops there.
    pub stationary_at: Option<usize>,
    pub seconds: f64,
}

/// One adversarial stage at resolution `d`, advanced iteration by iteration.
pub struct TnpStage {
    d: usize,
    target: Vec<Vec<f64>>,
    prior: Vec<Vec<f64>>,
    trains: Vec<TrackedTt>,
    steps: Vec<StepSize>,
    initial: Vec<f64>,
    cfg: PurifyConfig,
    trace: StageTrace,
}

fn planes_to_image(planes: &[Vec<f64>], d: usize) -> Result<ImageGrid> {
    let n = 1usize << d;
    ImageGrid::from_planes(n, n, planes.iter().map(|p| dequantize_plane(p, d)).collect())
}

fn image_to_planes(img: &ImageGrid, d: usize) -> Vec<Vec<f64>> {
    (0..img.channels()).map(|c| quantize_plane(img.plane(c), d)).collect()
}

impl TnpStage {
    /// Prolongs `prev` (fitted at `d − 1`) and freezes the prior.
    pub fn new(x_full: &ImageGrid, prev: &QttImage, d: usize, cfg: &PurifyConfig) -> Result<Self> {
        let big_d = x_full
            .resolution_index()
            .ok_or_else(|| structure("input must be a 2^D x 2^D image"))?;
        if d == 0 || d > big_d || prev.resolution() + 1 != d {
            return Err(TnpError::Range(format!(
                "stage resolution {d} does not follow train resolution {} under D = {big_d}",
                prev.resolution()
            )));
        }
        if prev.channels().len() != x_full.channels() {
            return Err(structure("channel count differs between train and image"));
        }
        let trains = prev
            .channels()
            .iter()
            .map(|tt| {
                Ok(TrackedTt::new(
                    prolong_image(tt, cfg.max_rank, cfg.round_tol)?.balanced(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let prior: Vec<Vec<f64>> = trains.iter().map(|t| t.values().to_vec()).collect();
        let target = image_to_planes(&avgpool(x_full, big_d - d)?, d);
        let initial = target
            .iter()
            .zip(&prior)
            .map(|(x, p)| stage_loss(cfg.norm, x, p, &vec![0.0; x.len()], p, cfg.prior_weight))
            .collect();
        Ok(Self {
            d,
            target,
            steps: vec![StepSize::new(cfg.learn_rate); trains.len()],
            prior,
            trains,
            initial,
            cfg: cfg.clone(),
            trace: StageTrace {
                resolution: d,
                ..StageTrace::default()
            },
        })
    }

    pub fn resolution(&self) -> usize {
        self.d
    }

    /// The frozen prior `P_d(y_{d−1})`.
    pub fn prior(&self) -> Result<ImageGrid> {
        planes_to_image(&self.prior, self.d)
    }

    pub fn target(&self) -> Result<ImageGrid> {
        planes_to_image(&self.target, self.d)
    }

    /// Current reconstruction `ŷ` (not clamped).
    pub fn current(&self) -> Result<ImageGrid> {
        let planes: Vec<Vec<f64>> = self.trains.iter().map(|t| t.values().to_vec()).collect();
        planes_to_image(&planes, self.d)
    }

    pub fn trace(&self) -> &StageTrace {
        &self.trace
    }

    /// One outer iteration; returns the loss after the update.
    pub fn step(&mut self) -> Result<f64> {
        let d = self.d;
        let y_hat = self.current()?;
        let x_d = self.target()?;
        let inner = inner_maximize(&y_hat, &x_d, self.cfg.alpha, self.cfg.eta, self.cfg.inner_steps)?;
        self.trace.max_delta = self.trace.max_delta.max(inner.delta.max_abs());
        if !inner.feasible(&y_hat) {
            self.trace.violations += 1;
            if self.cfg.check_invariants {
                return Err(TnpError::Range(format!(
                    "inner maximization left its feasible set at resolution {d}"
                )));
            }
        }
        let delta_star = image_to_planes(&inner.delta_star, d);
        let w = self.cfg.prior_weight;
        let mut total = 0.0;
        let mut moved = false;
        for c in 0..self.trains.len() {
            let (x, p, ds) = (&self.target[c], &self.prior[c], &delta_star[c]);
            let norm = self.cfg.norm;
            let loss = |y: &[f64]| stage_loss(norm, x, y, ds, p, w);
            let state = &mut self.trains[c];
            let before = loss(state.values());
            let g = stage_grad(norm, x, state.values(), ds, p, w);
            let direction = state.pullback(g)?;
            let report = backtracking_step(state, &direction, self.steps[c].get(), before, loss)?;
            self.steps[c].update(&report);
            moved |= report.moved;
            check_divergence(report.loss_after, self.initial[c].max(before), self.steps[c].get())?;
            total += report.loss_after;
        }
        let mean = total / self.trains.len() as f64;
        if !mean.is_finite() {
            return Err(TnpError::NonFinite(format!("adversarial stage {d}")));
        }
        self.trace.losses.push(mean);
        if !moved && self.trace.stationary_at.is_none() {
            self.trace.stationary_at = Some(self.trace.losses.len());
        }
        Ok(mean)
    }

    pub fn finish(self) -> Result<(QttImage, StageTrace)> {
        let qtt = QttImage::new(self.d, self.trains.into_iter().map(|t| t.tt).collect())?;
        Ok((qtt, self.trace))
    }
}

/// Runs `cfg.iterations` outer iterations of the stage at resolution `d`.
pub fn tnp_stage(x_full: &ImageGrid, prev: &QttImage, d: usize, cfg: &PurifyConfig) -> Result<(QttImage, StageTrace)> {
    let start = Instant::now();
    let mut stage = TnpStage::new(x_full, prev, d, cfg)?;
    for _ in 0..cfg.iterations {
        stage.step()?;
        if stage.trace.stationary_at.is_some() {
            break;
        }
    }
    stage.trace.seconds = start.elapsed().as_secs_f64();
    stage.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct PurifyTrace {
    pub fit: FitTrace,
    pub fit_seconds: f64,
    pub stages: Vec<StageTrace>,
}

impl PurifyTrace {
    pub fn violations(&self) -> usize {
        self.stages.iter().map(|s| s.violations).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Purified {
    /// Output at the input's original size, clamped to `[0, 1]`.
    pub image: ImageGrid,
    /// Output at the working resolution `2^D`, clamped to `[0, 1]`.
    pub working: ImageGrid,
    pub qtt: QttImage,
    pub trace: PurifyTrace,
}

/// End-to-end purification of an image of any size.
pub fn tnp_purify(img: &ImageGrid, cfg: &PurifyConfig) -> Result<Purified> {
    cfg.validate()?;
    let original = (img.height(), img.width());
    let x_full = resize_to_pow2(img, cfg.resolution)?;
    let base = cfg.base_fit();
    let pooled = avgpool(&x_full, cfg.coarse_levels)?;

    let start = Instant::now();
    let (mut qtt, fit_trace) = putt_fit(&pooled, &base)?;
    let mut trace = PurifyTrace {
        fit: fit_trace,
        fit_seconds: start.elapsed().as_secs_f64(),
        stages: Vec::with_capacity(cfg.coarse_levels),
    };
    if trace.fit.losses.iter().any(|v| !v.is_finite()) {
        return Err(TnpError::NonFinite("base fit".into()));
    }
    for d in base.resolution + 1..=cfg.resolution {
        let (next, stage_trace) = tnp_stage(&x_full, &qtt, d, cfg)?;
        qtt = next;
        trace.stages.push(stage_trace);
    }
    let rec = qtt.to_image()?;
    if rec.data().iter().any(|v| !v.is_finite()) {
        return Err(TnpError::NonFinite("reconstruction".into()));
    }
    let working = rec.clamp_unit().with_original_size(original);
    let image = resize_from_pow2(&working, original)?;
    Ok(Purified {
        image,
        working,
        qtt,
        trace,
    })
}

/// Plain coarse-to-fine reconstruction of an image of any size, returned at
/// its original size and clamped; the baseline TNP is compared against.
pub fn putt_reconstruct(img: &ImageGrid, cfg: &FitConfig) -> Result<(ImageGrid, QttImage, FitTrace)> {
    let original = (img.height(), img.width());
    let x_full = resize_to_pow2(img, cfg.resolution)?;
    let (qtt, trace) = putt_fit(&x_full, cfg)?;
    let rec = qtt.to_image()?.clamp_unit();
    Ok((resize_from_pow2(&rec, original)?, qtt, trace))
}
