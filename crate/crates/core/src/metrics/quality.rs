use serde::{Deserialize, Serialize};

use super::ssim::ssim;
use crate::error::Result;
use crate::image::ImageGrid;

/// Mean squared error over every pixel of every channel.
pub fn mse(x: &ImageGrid, y: &ImageGrid) -> Result<f64> {
    x.check_same_shape(y)?;
    let n = x.data().len() as f64;
    Ok(x.data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio for unit dynamic range. Identical images give
/// `f64::INFINITY`.
pub fn psnr(x: &ImageGrid, y: &ImageGrid) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nrmse {
    pub value: f64,
    /// Set when the reference is constant and the plain RMSE is reported.
    pub range_guarded: bool,
}

/// RMSE normalized by the value range of the reference.
pub fn nrmse(x_ref: &ImageGrid, y: &ImageGrid) -> Result<Nrmse> {
    let rmse = mse(x_ref, y)?.sqrt();
    let (lo, hi) = x_ref
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    Ok(if range > 0.0 {
        Nrmse {
            value: rmse / range,
            range_guarded: false,
        }
    } else {
        Nrmse {
            value: rmse,
            range_guarded: true,
        }
    })
}

/// Which pair of images a report compares, after the column groups of the
/// denoising comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PairRole {
    /// Clean input vs. its reconstruction.
    Cln,
    /// Perturbed input vs. its reconstruction.
    Adv,
    /// Reconstruction of the clean input vs. reconstruction of the perturbed one.
    Rec,
}

impl PairRole {
    pub fn as_str(self) -> &'static str {
        match self {
            PairRole::Cln => "CLN",
            PairRole::Adv => "ADV",
            PairRole::Rec => "REC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub role: PairRole,
    pub nrmse: f64,
    pub ssim: f64,
    /// `None` encodes an infinite PSNR (identical images).
    #[serde(with = "psnr_sentinel")]
    pub psnr: f64,
}

impl MetricReport {
    pub fn compute(role: PairRole, reference: &ImageGrid, other: &ImageGrid) -> Result<Self> {
        Ok(Self {
            role,
            nrmse: nrmse(reference, other)?.value,
            ssim: ssim(reference, other)?.value,
            psnr: psnr(reference, other)?,
        })
    }
}

mod psnr_sentinel {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
