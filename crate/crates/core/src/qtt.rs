//! Quantization of `2^d × 2^d` images into order-`d` tensors with mode size
//! 4, and the prolongation operator that lifts a QTT one resolution up.
//!
//! Mode `k` (0-based, coarsest first) carries index `2·r_k + c_k`, where
//! `r_k` and `c_k` are the `k`-th most significant bits of the row and
//! column. The finest 2×2 block of every pixel therefore lives in the last
//! mode, so averaging that mode is exactly one level of 2×2 average pooling.

use crate::error::{structure, Result, TnpError};
use crate::image::ImageGrid;
use crate::tensor::{mpo_apply, tt_round, DenseTensor, MpoCore, MpoFormat, TtFormat};

/// Order in which row/column bits are assigned to modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BitOrder {
    /// Coarse bits in the first mode, finest bits in the last.
    #[default]
    ScaleMajor,
}

/// Order-`d` tensor with every mode of size 4, holding one image channel.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    tensor: DenseTensor,
    order: BitOrder,
}

impl QuantizedTensor {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        if tensor.shape().iter().any(|&n| n != 4) {
            return Err(structure(format!(
                "quantized tensors need mode size 4, got {:?}",
                tensor.shape()
            )));
        }
        Ok(Self {
            tensor,
            order: BitOrder::ScaleMajor,
        })
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    pub fn bit_order(&self) -> BitOrder {
        self.order
    }

    pub fn resolution_index(&self) -> usize {
        self.tensor.order()
    }

    /// Mean over the finest mode; the result has one order less.
    pub fn mean_last_mode(&self) -> Result<Self> {
        let d = self.tensor.order();
        if d < 2 {
            return Err(TnpError::Range("cannot reduce an order-1 quantized tensor".into()));
        }
        let data = self
            .tensor
            .data()
            .chunks_exact(4)
            .map(|q| mean4(q[0], q[1], q[2], q[3]))
            .collect();
        Self::new(DenseTensor::new(vec![4; d - 1], data)?)
    }
}

#[inline]
pub(crate) fn mean4(a: f64, b: f64, c: f64, d: f64) -> f64 {
    ((a + b) + (c + d)) / 4.0
}

/// Interleaves row and column bits, row bit higher, coarsest pair first.
#[inline]
pub fn morton_index(row: usize, col: usize, d: usize) -> usize {
    let mut flat = 0;
    for k in (0..d).rev() {
        flat = (flat << 2) | (((row >> k) & 1) << 1) | ((col >> k) & 1);
    }
    flat
}

/// Scatters a row-major `2^d × 2^d` plane into quantized layout.
pub fn quantize_plane(plane: &[f64], d: usize) -> Vec<f64> {
    let n = 1usize << d;
    debug_assert_eq!(plane.len(), n * n);
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[morton_index(r, c, d)] = plane[r * n + c];
        }
    }
    out
}

/// Inverse of [`quantize_plane`].
pub fn dequantize_plane(q: &[f64], d: usize) -> Vec<f64> {
    let n = 1usize << d;
    debug_assert_eq!(q.len(), n * n);
    let mut out = vec![0.0; n * n];
    for r in 0..n {
        for c in 0..n {
            out[r * n + c] = q[morton_index(r, c, d)];
        }
    }
    out
}

fn pipeline_index(img: &ImageGrid) -> Result<usize> {
    match img.resolution_index() {
        Some(d) if d >= 1 => Ok(d),
        _ => Err(structure(format!(
            "{}x{} is not a 2^d x 2^d image with d >= 1",
            img.height(),
            img.width()
        ))),
    }
}

/// Quantizes a single-channel image.
pub fn quantize(img: &ImageGrid) -> Result<QuantizedTensor> {
    if img.channels() != 1 {
        return Err(structure(format!("quantize takes one channel, got {}", img.channels())));
    }
    quantize_channel(img, 0)
}

pub fn quantize_channel(img: &ImageGrid, channel: usize) -> Result<QuantizedTensor> {
    let d = pipeline_index(img)?;
    if channel >= img.channels() {
        return Err(structure(format!("channel {channel} out of range")));
    }
    let data = quantize_plane(img.plane(channel), d);
    QuantizedTensor::new(DenseTensor::new(vec![4; d], data)?)
}

/// Inverse of [`quantize`]; the result is a single-channel field, not
/// clamped to `[0, 1]`.
pub fn dequantize(qt: &QuantizedTensor) -> Result<ImageGrid> {
    let d = qt.resolution_index();
    let n = 1usize << d;
    ImageGrid::new_unbounded(n, n, 1, dequantize_plane(qt.tensor.data(), d))
}

/// One-dimensional prolongation operator `2^d → 2^{d+1}` on QTTs with
/// mode size 2: `d` input-bearing cores followed by one output-only core.
///
/// The bond carries the interpolation carry: state 0 means the input bits
/// equal the output bits so far, state 1 means the input index is one past
/// the output prefix. The last output index interpolates against zero.
pub fn build_prolongation_mpo_1d(d: usize) -> Result<MpoFormat> {
    if d == 0 {
        return Err(TnpError::Range("prolongation needs d >= 1".into()));
    }
    let mut cores = Vec::with_capacity(d + 1);
    for k in 0..d {
        let left = if k == 0 { 1 } else { 2 };
        let mut w = vec![0.0; left * 2 * 2 * 2];
        let mut set = |a: usize, out: usize, inp: usize, b: usize| {
            w[((a * 2 + out) * 2 + inp) * 2 + b] = 1.0;
        };
        set(0, 0, 0, 0);
        set(0, 1, 1, 0);
        set(0, 0, 1, 1);
        if left == 2 {
            set(1, 1, 0, 1);
        }
        cores.push(MpoCore::new(left, 2, 2, 2, w)?);
    }
    // Output bit 0 copies the sample, output bit 1 averages with the next.
    cores.push(MpoCore::new(2, 2, 1, 1, vec![1.0, 0.5, 0.0, 0.5])?);
    MpoFormat::new(cores, d)
}

/// Two-dimensional prolongation `P ⊗ P` on image QTTs with mode size 4,
/// mapping order `d` to order `d + 1`.
pub fn build_prolongation_mpo(d: usize) -> Result<MpoFormat> {
    let one = build_prolongation_mpo_1d(d)?;
    let cores = one
        .cores()
        .iter()
        .map(|w| {
            let (l, o, i, r) = w.shape();
            let (l2, o2, i2, r2) = (l * l, o * o, i * i, r * r);
            let mut data = vec![0.0; l2 * o2 * i2 * r2];
            for ar in 0..l {
                for ac in 0..l {
                    for or in 0..o {
                        for oc in 0..o {
                            for ir in 0..i {
                                for ic in 0..i {
                                    for br in 0..r {
                                        for bc in 0..r {
                                            let v = w.get(ar, or, ir, br) * w.get(ac, oc, ic, bc);
                                            let a = ar * l + ac;
                                            let out = or * o + oc;
                                            let inp = ir * i + ic;
                                            let b = br * r + bc;
                                            data[((a * o2 + out) * i2 + inp) * r2 + b] = v;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            MpoCore::new(l2, o2, i2, r2, data)
        })
        .collect::<Result<Vec<_>>>()?;
    MpoFormat::new(cores, d)
}

/// Lifts the QTT of a resolution-`d` image to resolution `d + 1`, then
/// rounds the doubled ranks back under `max_rank`.
pub fn prolong_image(tt: &TtFormat, max_rank: usize, tol: f64) -> Result<TtFormat> {
    if tt.modes().iter().any(|&n| n != 4) {
        return Err(structure("prolongation expects an image QTT with mode size 4"));
    }
    let op = build_prolongation_mpo(tt.order())?;
    tt_round(&mpo_apply(&op, tt)?, max_rank, tol)
}

/// Image-level prolongation of every channel through the dense operator.
pub fn prolong_image_dense(img: &ImageGrid) -> Result<ImageGrid> {
    let d = pipeline_index(img)?;
    let n = 1usize << d;
    let up = |v: &[f64], m: usize| -> f64 {
        // v has length n; m indexes the 2n output.
        let k = m / 2;
        if m % 2 == 0 {
            v[k]
        } else {
            0.5 * v[k] + 0.5 * v.get(k + 1).copied().unwrap_or(0.0)
        }
    };
    let mut planes = Vec::with_capacity(img.channels());
    for c in 0..img.channels() {
        let plane = img.plane(c);
        // Columns first, then rows.
        let mut wide = vec![0.0; n * 2 * n];
        for r in 0..n {
            let row = &plane[r * n..(r + 1) * n];
            for m in 0..2 * n {
                wide[r * 2 * n + m] = up(row, m);
            }
        }
        let mut out = vec![0.0; 4 * n * n];
        let mut col = vec![0.0; n];
        for m in 0..2 * n {
            for (r, v) in col.iter_mut().enumerate() {
                *v = wide[r * 2 * n + m];
            }
            for q in 0..2 * n {
                out[q * 2 * n + m] = up(&col, q);
            }
        }
        planes.push(out);
    }
    ImageGrid::from_planes(2 * n, 2 * n, planes)
}
