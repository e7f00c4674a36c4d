//! Planar multi-channel images and the resampling operations of the
//! coarse-to-fine pipeline.

use crate::error::{structure, Result, TnpError};

/// Planar image: `data[c·h·w + row·w + col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
    original_size: (usize, usize),
}

impl ImageGrid {
    /// Image with every value in `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let img = Self::new_unbounded(height, width, channels, data)?;
        if let Some(v) = img.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(TnpError::Range(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(img)
    }

    /// Image-shaped field without the `[0, 1]` constraint, for intermediate
    /// reconstructions, gradients and perturbations.
    pub fn new_unbounded(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(structure(format!("empty image {height}x{width}")));
        }
        if channels == 0 {
            return Err(structure("image needs at least one channel"));
        }
        if data.len() != height * width * channels {
            return Err(structure(format!(
                "{height}x{width}x{channels} image needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TnpError::NonFinite("ImageGrid".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            original_size: (height, width),
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new_unbounded(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds an image from `f(channel, row, col)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for c in 0..channels {
            for r in 0..height {
                for col in 0..width {
                    data.push(f(c, r, col));
                }
            }
        }
        Self::new_unbounded(height, width, channels, data)
    }

    pub fn from_planes(height: usize, width: usize, planes: Vec<Vec<f64>>) -> Result<Self> {
        let channels = planes.len();
        Self::new_unbounded(height, width, channels, planes.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.pixel_count();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    /// Size before any power-of-two resize.
    pub fn original_size(&self) -> (usize, usize) {
        self.original_size
    }

    pub fn with_original_size(mut self, size: (usize, usize)) -> Self {
        self.original_size = size;
        self
    }

    /// `d` such that the image is `2^d × 2^d`, if it is.
    pub fn resolution_index(&self) -> Option<usize> {
        (self.height == self.width && self.height.is_power_of_two()).then(|| self.height.trailing_zeros() as usize)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(structure(format!(
                "image shapes differ: {}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }

    pub fn clamp_unit(&self) -> Self {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.data.iter_mut().zip(&other.data).for_each(|(a, &b)| *a = f(*a, b));
        Ok(out)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_levels(img: &ImageGrid, levels: usize) -> Result<usize> {
    let d = img
        .resolution_index()
        .ok_or_else(|| structure(format!("{}x{} is not a power-of-two square", img.height, img.width)))?;
    if levels > d {
        return Err(TnpError::Range(format!(
            "cannot downsample a resolution-{d} image by {levels} levels"
        )));
    }
    Ok(d)
}

/// Non-overlapping 2×2 block means, applied `levels` times.
pub fn avgpool(img: &ImageGrid, levels: usize) -> Result<ImageGrid> {
    check_levels(img, levels)?;
    let mut cur = img.clone();
    for _ in 0..levels {
        let n = cur.height / 2;
        let src = &cur;
        let next = ImageGrid::from_fn(n, n, cur.channels, |c, r, col| {
            let (r2, c2) = (2 * r, 2 * col);
            // Pairwise sums in a fixed order so the result matches the
            // mean over the finest quantized mode exactly.
            ((src.get(c, r2, c2) + src.get(c, r2, c2 + 1)) + (src.get(c, r2 + 1, c2) + src.get(c, r2 + 1, c2 + 1)))
                / 4.0
        })?;
        cur = next.with_original_size(img.original_size);
    }
    Ok(cur)
}

/// Keeps pixel `(0, 0)` of every `2^levels` block.
pub fn stride_sample(img: &ImageGrid, levels: usize) -> Result<ImageGrid> {
    check_levels(img, levels)?;
    let s = 1 << levels;
    let n = img.height / s;
    Ok(
        ImageGrid::from_fn(n, n, img.channels, |c, r, col| img.get(c, r * s, col * s))?
            .with_original_size(img.original_size),
    )
}

/// Corner-aligned bilinear resampling of every channel.
pub fn resize_bilinear(img: &ImageGrid, height: usize, width: usize) -> Result<ImageGrid> {
    if height == 0 || width == 0 {
        return Err(structure("target size must be nonzero"));
    }
    let map = |dst: usize, dst_len: usize, src_len: usize| -> (usize, usize, f64) {
        if dst_len == 1 || src_len == 1 {
            return (0, 0, 0.0);
        }
        let pos = dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64;
        let lo = (pos.floor() as usize).min(src_len - 1);
        let hi = (lo + 1).min(src_len - 1);
        (lo, hi, pos - lo as f64)
    };
    let rows: Vec<_> = (0..height).map(|r| map(r, height, img.height)).collect();
    let cols: Vec<_> = (0..width).map(|c| map(c, width, img.width)).collect();
    ImageGrid::from_fn(height, width, img.channels, |c, r, col| {
        let (r0, r1, fr) = rows[r];
        let (c0, c1, fc) = cols[col];
        let top = img.get(c, r0, c0) * (1.0 - fc) + img.get(c, r0, c1) * fc;
        let bottom = img.get(c, r1, c0) * (1.0 - fc) + img.get(c, r1, c1) * fc;
        top * (1.0 - fr) + bottom * fr
    })
}

/// Upsamples to `2^d × 2^d`, recording the original size.
pub fn resize_to_pow2(img: &ImageGrid, d: usize) -> Result<ImageGrid> {
    let side = 1usize
        .checked_shl(d as u32)
        .filter(|_| d < 16)
        .ok_or_else(|| TnpError::Range(format!("resolution index {d} is too large")))?;
    if img.height.max(img.width) > side {
        return Err(TnpError::Range(format!(
            "resolution index {d} is too small for a {}x{} image",
            img.height, img.width
        )));
    }
    let original = (img.height, img.width);
    if img.height == side && img.width == side {
        return Ok(img.clone().with_original_size(original));
    }
    Ok(resize_bilinear(img, side, side)?.with_original_size(original))
}

/// Resamples back to `target` and clamps to `[0, 1]`.
pub fn resize_from_pow2(img: &ImageGrid, target: (usize, usize)) -> Result<ImageGrid> {
    let out = if (img.height, img.width) == target {
        img.clone()
    } else {
        resize_bilinear(img, target.0, target.1)?
    };
    Ok(out.clamp_unit().with_original_size(target))
}
