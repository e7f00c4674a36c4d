//! Histogram KL divergence against a moment-matched Gaussian, and the
//! per-level sweep of a perturbation field under downsampling.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use super::noise::{sample_mean, sample_std};
use crate::error::{Result, TnpError};
use crate::image::{avgpool, stride_sample, ImageGrid};

pub const DEFAULT_BINS: usize = 100;
/// Histogram support is `μ ± SPAN·σ`.
pub const SPAN: f64 = 4.0;
pub const SMOOTHING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub mean: f64,
    pub std: f64,
}

pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if bins == 0 {
        return Err(TnpError::Statistics("histogram needs at least one bin".into()));
    }
    if values.len() < 2 {
        return Err(TnpError::Statistics("need at least two samples".into()));
    }
    let mean = sample_mean(values);
    let std = sample_std(values);
    if !(std > 0.0) {
        return Err(TnpError::Statistics("samples have zero variance".into()));
    }
    let lo = mean - SPAN * std;
    let width = 2.0 * SPAN * std / bins as f64;
    let edges = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let pos = (v - lo) / width;
        if pos >= 0.0 && pos < bins as f64 {
            counts[pos as usize] += 1;
        } else if pos == bins as f64 {
            counts[bins - 1] += 1;
        }
    }
    Ok(Histogram {
        edges,
        counts,
        mean,
        std,
    })
}

/// `Σ p log(p/q)` between the sample histogram and the Gaussian with the
/// same mean and variance, both restricted to the histogram support and
/// smoothed additively.
pub fn kl_vs_gaussian(values: &[f64], bins: usize) -> Result<f64> {
    Ok(kl_of_histogram(&histogram(values, bins)?))
}

pub fn kl_of_histogram(h: &Histogram) -> f64 {
    let normal = Normal::new(h.mean, h.std).expect("positive std");
    let total: usize = h.counts.iter().sum();
    let mut p: Vec<f64> = h
        .counts
        .iter()
        .map(|&c| c as f64 / total.max(1) as f64 + SMOOTHING)
        .collect();
    let mut q: Vec<f64> = h
        .edges
        .windows(2)
        .map(|e| normal.cdf(e[1]) - normal.cdf(e[0]) + SMOOTHING)
        .collect();
    let ps: f64 = p.iter().sum();
    let qs: f64 = q.iter().sum();
    p.iter_mut().for_each(|v| *v /= ps);
    q.iter_mut().for_each(|v| *v /= qs);
    p.iter()
        .zip(&q)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Downsampler {
    AvgPool,
    Stride,
}

impl Downsampler {
    pub fn as_str(self) -> &'static str {
        match self {
            Downsampler::AvgPool => "avgpool",
            Downsampler::Stride => "stride",
        }
    }

    pub fn apply(self, img: &ImageGrid, levels: usize) -> Result<ImageGrid> {
        match self {
            Downsampler::AvgPool => avgpool(img, levels),
            Downsampler::Stride => stride_sample(img, levels),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub samples: usize,
    pub kl: f64,
    pub histogram: Histogram,
}

/// KL divergence of the field at downsampling levels `0..=levels`.
pub fn downsample_distribution_sweep(
    noise: &ImageGrid,
    levels: usize,
    method: Downsampler,
    bins: usize,
) -> Result<Vec<LevelStats>> {
    let mut out = Vec::with_capacity(levels + 1);
    let mut cur = noise.clone();
    for level in 0..=levels {
        if level > 0 {
            cur = method.apply(&cur, 1)?;
        }
        let histogram = histogram(cur.data(), bins)?;
        out.push(LevelStats {
            level,
            samples: cur.data().len(),
            kl: kl_of_histogram(&histogram),
            histogram,
        });
    }
    Ok(out)
}
