//! Structural similarity with an analytic gradient.
//!
//! Local statistics come from an 11×11 Gaussian window (σ = 1.5) evaluated
//! at every position where the window fits inside the image ("valid"
//! placement). The score is the mean of the local index over all positions
//! and over channels. Images smaller than the window fall back to a single
//! window with uniform weights covering the whole plane.

use crate::error::Result;
use crate::image::ImageGrid;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ssim {
    pub value: f64,
    /// Set when the image is smaller than the window.
    pub global_fallback: bool,
}

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let half = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let t = i as f64 - half;
        *v = (-t * t / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable valid-mode filter: `h × w` in, `(h−10) × (w−10)` out.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for r in 0..h {
        let row = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            tmp[r * ow + c] = row[c..c + WINDOW].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for (t, &kv) in k.iter().enumerate() {
            let src_row = &tmp[(r + t) * ow..(r + t + 1) * ow];
            for (o, &v) in out[r * ow..(r + 1) * ow].iter_mut().zip(src_row) {
                *o += kv * v;
            }
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a window-position map back onto
/// the `h × w` pixel grid.
fn filter_valid_adjoint(map: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let ow = w - WINDOW + 1;
    let oh = h - WINDOW + 1;
    let mut tmp = vec![0.0; h * ow];
    for r in 0..oh {
        for (t, &kv) in k.iter().enumerate() {
            let dst = &mut tmp[(r + t) * ow..(r + t + 1) * ow];
            for (o, &v) in dst.iter_mut().zip(&map[r * ow..(r + 1) * ow]) {
                *o += kv * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        let dst = &mut out[r * w..(r + 1) * w];
        for c in 0..ow {
            let v = tmp[r * ow + c];
            for (o, &kv) in dst[c..c + WINDOW].iter_mut().zip(k) {
                *o += kv * v;
            }
        }
    }
    out
}

struct LocalStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    ex2: Vec<f64>,
    ey2: Vec<f64>,
    exy: Vec<f64>,
}

fn local_stats(x: &[f64], y: &[f64], h: usize, w: usize, global: bool) -> LocalStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    if global {
        let n = (h * w) as f64;
        let mean = |v: &[f64]| vec![v.iter().sum::<f64>() / n];
        LocalStats {
            mu_x: mean(x),
            mu_y: mean(y),
            ex2: mean(&xx),
            ey2: mean(&yy),
            exy: mean(&xy),
        }
    } else {
        let k = gaussian_kernel();
        LocalStats {
            mu_x: filter_valid(x, h, w, &k),
            mu_y: filter_valid(y, h, w, &k),
            ex2: filter_valid(&xx, h, w, &k),
            ey2: filter_valid(&yy, h, w, &k),
            exy: filter_valid(&xy, h, w, &k),
        }
    }
}

/// Per-window SSIM and, optionally, its partial derivatives with respect
/// to (μx, E[x²], E[xy]).
fn window_terms(s: &LocalStats, i: usize) -> (f64, [f64; 3]) {
    let (mx, my) = (s.mu_x[i], s.mu_y[i]);
    let vx = s.ex2[i] - mx * mx;
    let vy = s.ey2[i] - my * my;
    let cxy = s.exy[i] - mx * my;
    let a = 2.0 * mx * my + C1;
    let b = 2.0 * cxy + C2;
    let c = mx * mx + my * my + C1;
    let d = vx + vy + C2;
    let ssim = (a * b) / (c * d);
    // Grouped so every partial is exactly zero when x == y bitwise.
    let ds_dmx = (2.0 / c) * (my * (b / d) - mx * ssim);
    let ds_dvx = -ssim / d;
    let ds_dcxy = 2.0 * (a / c) / d;
    // Chain through vx = E[x²] − μx² and cxy = E[xy] − μx μy.
    let g_mu = ds_dmx - 2.0 * mx * ds_dvx - my * ds_dcxy;
    (ssim, [g_mu, ds_dvx, ds_dcxy])
}

fn ssim_impl(x: &ImageGrid, y: &ImageGrid, want_grad: bool) -> Result<(Ssim, Option<ImageGrid>)> {
    x.check_same_shape(y)?;
    let (h, w) = (x.height(), x.width());
    let global = h < WINDOW || w < WINDOW;
    let channels = x.channels();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; x.data().len()]);
    let k = gaussian_kernel();
    for ch in 0..channels {
        let (xp, yp) = (x.plane(ch), y.plane(ch));
        let stats = local_stats(xp, yp, h, w, global);
        let count = stats.mu_x.len();
        let mut maps = grad
            .as_ref()
            .map(|_| [vec![0.0; count], vec![0.0; count], vec![0.0; count]]);
        let mut sum = 0.0;
        for i in 0..count {
            let (s, g) = window_terms(&stats, i);
            sum += s;
            if let Some(m) = maps.as_mut() {
                m[0][i] = g[0];
                m[1][i] = g[1];
                m[2][i] = g[2];
            }
        }
        total += sum / count as f64;
        if let (Some(m), Some(out)) = (maps, grad.as_mut()) {
            let scale = 1.0 / (count as f64 * channels as f64);
            let back: Vec<Vec<f64>> = if global {
                let n = (h * w) as f64;
                m.iter().map(|v| vec![v[0] / n; h * w]).collect()
            } else {
                m.iter().map(|v| filter_valid_adjoint(v, h, w, &k)).collect()
            };
            let plane = &mut out[ch * h * w..(ch + 1) * h * w];
            for p in 0..h * w {
                plane[p] = scale * (back[0][p] + 2.0 * xp[p] * back[1][p] + yp[p] * back[2][p]);
            }
        }
    }
    let value = total / channels as f64;
    let grad = match grad {
        Some(g) => Some(ImageGrid::new_unbounded(h, w, channels, g)?),
        None => None,
    };
    Ok((
        Ssim {
            value,
            global_fallback: global,
        },
        grad,
    ))
}

pub fn ssim(x: &ImageGrid, y: &ImageGrid) -> Result<Ssim> {
    Ok(ssim_impl(x, y, false)?.0)
}

/// SSIM and its gradient with respect to `x`.
pub fn ssim_grad(x: &ImageGrid, y: &ImageGrid) -> Result<(Ssim, ImageGrid)> {
    let (s, g) = ssim_impl(x, y, true)?;
    Ok((s, g.expect("gradient requested")))
}
