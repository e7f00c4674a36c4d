//! Seeded synthetic test images.

use rand::Rng as _;

use crate::error::Result;
use crate::image::ImageGrid;
use crate::rng::stream_rng;

/// Sum of three low-frequency plane waves, rescaled into `[0.1, 0.9]`.
pub fn smooth_image(size: usize, channels: usize, seed: u64) -> Result<ImageGrid> {
    let mut rng = stream_rng(seed, 0x5eed);
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..channels)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let fx = rng.random_range(0.5..3.0);
                    let fy = rng.random_range(0.5..3.0);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let amp = rng.random_range(0.5..1.0);
                    (fx, fy, phase, amp)
                })
                .collect()
        })
        .collect();
    let n = size as f64;
    let raw = ImageGrid::from_fn(size, size, channels, |c, r, col| {
        let (u, v) = (r as f64 / n, col as f64 / n);
        waves[c]
            .iter()
            .map(|&(fx, fy, ph, a)| a * (std::f64::consts::TAU * (fx * u + fy * v) + ph).sin())
            .sum()
    })?;
    let mut out = raw.clone();
    for c in 0..channels {
        let plane = raw.plane(c);
        let lo = plane.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = plane.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = (hi - lo).max(f64::MIN_POSITIVE);
        let start = c * size * size;
        for (dst, &v) in out.data_mut()[start..start + size * size].iter_mut().zip(plane) {
            *dst = 0.1 + 0.8 * (v - lo) / span;
        }
    }
    ImageGrid::new(size, size, channels, out.into_data())
}
