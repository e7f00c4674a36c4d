//! Synthetic perturbation fields.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TnpError};
use crate::image::ImageGrid;
use crate::rng::stream_rng;

/// Standard deviation of the reference Gaussian noise.
pub const GAUSSIAN_STD: f64 = 0.3;

/// ℓ∞ amplitude of the structured surrogate perturbation.
pub const STRUCTURED_EPS: f64 = 8.0 / 255.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// 𝒩(0, 0.3²).
    Gaussian,
    /// 0.5·𝒩(−1, 0.5²) + 0.5·𝒩(1, 0.5²).
    Mog,
    /// Beta(0.5, 0.5) − 0.5.
    Beta,
    /// Uniform(−0.5, 0.5).
    Uniform,
    /// Sign-quantized band-pass noise at amplitude `eps`.
    Structured,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 5] = [
        NoiseKind::Gaussian,
        NoiseKind::Mog,
        NoiseKind::Beta,
        NoiseKind::Uniform,
        NoiseKind::Structured,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Mog => "mog",
            NoiseKind::Beta => "beta",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Structured => "structured",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = TnpError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TnpError::Config(format!("unknown noise kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    /// Rescale non-Gaussian kinds so their sample standard deviation is 0.3.
    pub match_snr: bool,
    /// Amplitude of the structured kind.
    pub eps: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, seed: u64) -> Self {
        Self {
            kind,
            match_snr: true,
            eps: STRUCTURED_EPS,
            seed,
        }
    }
}

/// Draws a perturbation field of shape `(height, width, channels)`.
pub fn gen_noise(spec: &NoiseSpec, height: usize, width: usize, channels: usize) -> Result<ImageGrid> {
    if !(spec.eps.is_finite() && spec.eps >= 0.0) {
        return Err(TnpError::Config(format!(
            "noise amplitude {} must be nonnegative",
            spec.eps
        )));
    }
    let n = height * width * channels;
    let mut rng = stream_rng(spec.seed, 0);
    let data: Vec<f64> = match spec.kind {
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, GAUSSIAN_STD).expect("valid std");
            (0..n).map(|_| normal.sample(&mut rng)).collect()
        }
        NoiseKind::Mog => {
            let normal = Normal::new(0.0, 0.5).expect("valid std");
            (0..n)
                .map(|_| {
                    let centre = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    centre + normal.sample(&mut rng)
                })
                .collect()
        }
        NoiseKind::Beta => (0..n)
            .map(|_| {
                // Arcsine law: if U ~ U(0,1) then sin²(πU/2) ~ Beta(½, ½).
                let u: f64 = rng.random();
                (std::f64::consts::FRAC_PI_2 * u).sin().powi(2) - 0.5
            })
            .collect(),
        NoiseKind::Uniform => (0..n).map(|_| rng.random_range(-0.5..0.5)).collect(),
        NoiseKind::Structured => {
            return structured(&mut rng, spec.eps, height, width, channels);
        }
    };
    let mut field = ImageGrid::new_unbounded(height, width, channels, data)?;
    if spec.match_snr && spec.kind != NoiseKind::Gaussian {
        let std = sample_std(field.data());
        if std > 0.0 {
            let s = GAUSSIAN_STD / std;
            field.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(field)
}

pub fn sample_mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Population standard deviation.
pub fn sample_std(v: &[f64]) -> f64 {
    let m = sample_mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

fn blur(plane: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            tmp[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * plane[r * w + clampi(c as isize + k as isize - radius, w)])
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| kv * tmp[clampi(r as isize + k as isize - radius, h) * w + c])
                .sum::<f64>()
                / norm;
        }
    }
    out
}

/// Difference-of-Gaussians band-pass of white noise, sign-quantized to ±eps.
fn structured(rng: &mut crate::rng::Rng, eps: f64, height: usize, width: usize, channels: usize) -> Result<ImageGrid> {
    let normal = Normal::new(0.0, 1.0).expect("unit std");
    let mut planes = Vec::with_capacity(channels);
    for _ in 0..channels {
        let white: Vec<f64> = (0..height * width).map(|_| normal.sample(rng)).collect();
        let fine = blur(&white, height, width, 1.0);
        let coarse = blur(&white, height, width, 3.0);
        planes.push(
            fine.iter()
                .zip(&coarse)
                .map(|(a, b)| if a >= b { eps } else { -eps })
                .collect(),
        );
    }
    ImageGrid::from_planes(height, width, planes)
}

/// Adds a perturbation to an image and clamps to `[0, 1]`.
pub fn perturb(img: &ImageGrid, noise: &ImageGrid) -> Result<ImageGrid> {
    Ok(img.zip_map(noise, |a, b| a + b)?.clamp_unit())
}
