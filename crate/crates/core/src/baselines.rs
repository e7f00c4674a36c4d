//! Single-resolution reference reconstructions for benchmarking.
//!
//! * TT(gd): a tensor train over the planar `(C, H, W)` layout, fitted by
//!   gradient descent.
//! * QTT(gd): the quantized train fitted at full resolution from the start,
//!   i.e. coarse-to-fine fitting with no coarse levels.

use rand::Rng as _;

use crate::error::{Result, TnpError};
use crate::image::{resize_from_pow2, resize_to_pow2, ImageGrid};
use crate::optim::{backtracking_step, check_divergence, TrackedTt};
use crate::putt::{putt_fit, FitConfig, StepSize};
use crate::rng::stream_rng;
use crate::tensor::{TtCore, TtFormat};

fn half_mse(y: &[f64], x: &[f64]) -> f64 {
    0.5 * y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
}

/// Random `(C, H, W)` train with ranks capped by `max_rank`. Entries of core
/// `k` are uniform in `±init_scale / √r_k` (`r_k` its left rank) so the
/// contraction stays of order `init_scale` whatever the ranks.
pub fn init_plain_tt(shape: [usize; 3], max_rank: usize, init_scale: f64, seed: u64) -> Result<TtFormat> {
    if max_rank == 0 {
        return Err(TnpError::Range("max_rank must be positive".into()));
    }
    let [c, h, w] = shape;
    let ranks = [1, c.min(max_rank), w.min(max_rank).min(c * h), 1];
    let mut rng = stream_rng(seed, 0x77);
    let cores = shape
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let len = ranks[k] * m * ranks[k + 1];
            let a = init_scale / (ranks[k] as f64).sqrt();
            let data = (0..len)
                .map(|_| if a == 0.0 { 0.0 } else { rng.random_range(-a..=a) })
                .collect();
            TtCore::new(ranks[k], m, ranks[k + 1], data)
        })
        .collect::<Result<Vec<_>>>()?;
    TtFormat::new(cores)
}

/// TT(gd) at `2^D × 2^D`, returned at the input's size and clamped.
/// Uses the iteration count, rank cap, step size, scale and seed of `cfg`.
pub fn tt_gd_reconstruct(img: &ImageGrid, cfg: &FitConfig) -> Result<(ImageGrid, TtFormat, Vec<f64>)> {
    cfg.validate()?;
    let original = (img.height(), img.width());
    let x = resize_to_pow2(img, cfg.resolution)?;
    let shape = [x.channels(), x.height(), x.width()];
    let target = x.data();
    let mut state = TrackedTt::new(init_plain_tt(shape, cfg.max_rank, cfg.init_scale, cfg.seed)?);
    let initial = half_mse(state.values(), target);
    let mut step = StepSize::new(cfg.learn_rate);
    let mut losses = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let before = half_mse(state.values(), target);
        let residual = state.values().iter().zip(target).map(|(y, t)| y - t).collect();
        let grads = state.pullback(residual)?;
        let report = backtracking_step(&mut state, &grads, step.get(), before, |y| half_mse(y, target))?;
        step.update(&report);
        check_divergence(report.loss_after, initial, step.get())?;
        losses.push(report.loss_after);
    }
    let rec = ImageGrid::new_unbounded(x.height(), x.width(), x.channels(), state.values().to_vec())?;
    Ok((resize_from_pow2(&rec.clamp_unit(), original)?, state.tt, losses))
}

/// QTT(gd): quantized fit with no coarse levels.
pub fn qtt_gd_reconstruct(img: &ImageGrid, cfg: &FitConfig) -> Result<(ImageGrid, Vec<f64>)> {
    let cfg = FitConfig {
        coarse_levels: 0,
        upsample_iters: None,
        ..cfg.clone()
    };
    let original = (img.height(), img.width());
    let x = resize_to_pow2(img, cfg.resolution)?;
    let (qtt, trace) = putt_fit(&x, &cfg)?;
    let rec = qtt.to_image()?.clamp_unit();
    Ok((resize_from_pow2(&rec, original)?, trace.losses))
}
