//! Tensor-train format: construction, contraction, TT-SVD, rounding and
//! core gradients of quadratic losses.

use super::dense::{checked_len, DenseTensor, DEFAULT_ELEMENT_BUDGET};
use super::linalg::{self, matmul, matmul_nt, matmul_tn};
use crate::error::{structure, Result, TnpError};

/// A 3-way core of shape `(left, mode, right)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TtCore {
    left: usize,
    mode: usize,
    right: usize,
    data: Vec<f64>,
}

impl TtCore {
    pub fn new(left: usize, mode: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        if left == 0 || mode == 0 || right == 0 {
            return Err(structure(format!(
                "core shape ({left}, {mode}, {right}) has an empty dimension"
            )));
        }
        if data.len() != left * mode * right {
            return Err(structure(format!(
                "core shape ({left}, {mode}, {right}) needs {} values, got {}",
                left * mode * right,
                data.len()
            )));
        }
        Ok(Self {
            left,
            mode,
            right,
            data,
        })
    }

    pub fn zeros(left: usize, mode: usize, right: usize) -> Self {
        Self {
            left,
            mode,
            right,
            data: vec![0.0; left * mode * right],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.left, self.mode, self.right)
    }

    pub fn left(&self) -> usize {
        self.left
    }

    pub fn mode(&self) -> usize {
        self.mode
    }

    pub fn right(&self) -> usize {
        self.right
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, a: usize, i: usize, b: usize) -> f64 {
        self.data[(a * self.mode + i) * self.right + b]
    }

    /// The `left × right` slice selected by mode index `i`.
    pub fn slice(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.left * self.right);
        for a in 0..self.left {
            let start = (a * self.mode + i) * self.right;
            out.extend_from_slice(&self.data[start..start + self.right]);
        }
        out
    }
}

/// Ordered chain of cores with boundary ranks 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TtFormat {
    cores: Vec<TtCore>,
}

impl TtFormat {
    pub fn new(cores: Vec<TtCore>) -> Result<Self> {
        if cores.is_empty() {
            return Err(structure("a tensor train needs at least one core"));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(structure("boundary ranks must be 1"));
        }
        for (k, pair) in cores.windows(2).enumerate() {
            if pair[0].right != pair[1].left {
                return Err(structure(format!(
                    "rank mismatch between cores {k} and {}: {} vs {}",
                    k + 1,
                    pair[0].right,
                    pair[1].left
                )));
            }
        }
        if cores.iter().flat_map(|c| &c.data).any(|v| !v.is_finite()) {
            return Err(TnpError::NonFinite("TtFormat::new".into()));
        }
        Ok(Self { cores })
    }

    /// All-zero train with every rank 1.
    pub fn zeros(modes: &[usize]) -> Result<Self> {
        Self::new(modes.iter().map(|&n| TtCore::zeros(1, n, 1)).collect())
    }

    pub fn cores(&self) -> &[TtCore] {
        &self.cores
    }

    pub fn into_cores(self) -> Vec<TtCore> {
        self.cores
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn modes(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.mode).collect()
    }

    /// `(r₀, …, r_D)`.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.right));
        r
    }

    pub fn num_params(&self) -> usize {
        self.cores.iter().map(|c| c.data.len()).sum()
    }

    pub fn dense_len(&self) -> Result<usize> {
        checked_len(&self.modes())
    }

    /// Entry at one multi-index via the ordered product of core slices.
    pub fn entry(&self, idx: &[usize]) -> f64 {
        let mut row = vec![1.0];
        for (core, &i) in self.cores.iter().zip(idx) {
            row = matmul(&row, 1, core.left, &core.slice(i), core.right);
        }
        row[0]
    }

    /// Returns a train whose cores are `self + step · direction`, core by core.
    pub fn axpy(&self, step: f64, direction: &[TtCore]) -> Result<Self> {
        if direction.len() != self.cores.len() {
            return Err(structure("direction has the wrong number of cores"));
        }
        let mut cores = self.cores.clone();
        for (c, g) in cores.iter_mut().zip(direction) {
            if c.shape() != g.shape() {
                return Err(structure(format!(
                    "direction core shape {:?} differs from {:?}",
                    g.shape(),
                    c.shape()
                )));
            }
            for (v, d) in c.data.iter_mut().zip(&g.data) {
                *v += step * d;
            }
        }
        Self::new(cores)
    }

    /// Rescales the cores to a common Frobenius norm. The product of the
    /// scale factors is one, so the represented tensor is unchanged up to
    /// rounding.
    pub fn balanced(&self) -> Self {
        let norms: Vec<f64> = self
            .cores
            .iter()
            .map(|c| c.data.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
            return self.clone();
        }
        let log_mean = norms.iter().map(|n| n.ln()).sum::<f64>() / norms.len() as f64;
        let mut cores = self.cores.clone();
        for (c, n) in cores.iter_mut().zip(&norms) {
            let s = (log_mean - n.ln()).exp();
            c.data.iter_mut().for_each(|v| *v *= s);
        }
        Self { cores }
    }
}

/// Right partial products `R_k` (r_k × ∏_{m>k} I_m) for k = 0..=D.
/// `R_0` is the full contraction as a 1 × N row.
pub(crate) fn right_environments(tt: &TtFormat) -> Vec<Vec<f64>> {
    let d = tt.order();
    let mut envs = vec![Vec::new(); d + 1];
    envs[d] = vec![1.0];
    let mut cols = 1;
    for k in (0..d).rev() {
        let c = &tt.cores[k];
        // (r_{k-1}·I_k × r_k) · (r_k × cols) laid out as r_{k-1} × (I_k·cols).
        envs[k] = matmul(&c.data, c.left * c.mode, c.right, &envs[k + 1], cols);
        cols *= c.mode;
    }
    envs
}

/// Dense contraction of a tensor train.
pub fn tt_contract(tt: &TtFormat) -> Result<DenseTensor> {
    tt_contract_with_budget(tt, DEFAULT_ELEMENT_BUDGET)
}

pub fn tt_contract_with_budget(tt: &TtFormat, budget: usize) -> Result<DenseTensor> {
    let len = tt.dense_len()?;
    if len > budget {
        return Err(TnpError::Capacity { requested: len, budget });
    }
    let mut row = vec![1.0];
    let mut rows = 1;
    for c in &tt.cores {
        row = matmul(&row, rows, c.left, &c.data, c.mode * c.right);
        rows *= c.mode;
    }
    Ok(DenseTensor::from_parts_unchecked(tt.modes(), row))
}

/// Sequential-SVD decomposition with a rank cap and a relative tolerance on
/// the discarded singular values of every unfolding.
pub fn tt_svd(x: &DenseTensor, max_rank: usize, tol: f64) -> Result<TtFormat> {
    if max_rank == 0 {
        return Err(TnpError::Range("max_rank must be positive".into()));
    }
    if tol < 0.0 || !tol.is_finite() {
        return Err(TnpError::Range(format!("tolerance {tol} must be nonnegative")));
    }
    let modes = x.shape().to_vec();
    if x.data().iter().all(|&v| v == 0.0) {
        return TtFormat::zeros(&modes);
    }
    let d = modes.len();
    let mut cores = Vec::with_capacity(d);
    let mut rest: Vec<f64> = x.data().to_vec();
    let mut left = 1;
    let mut cols = x.len();
    for (k, &n) in modes.iter().enumerate() {
        cols /= n;
        let rows = left * n;
        if k == d - 1 {
            cores.push(TtCore::new(left, n, 1, rest)?);
            break;
        }
        let dec = linalg::svd(&rest, rows, cols);
        let r = linalg::truncation_rank(&dec.s, max_rank, tol, (rows, cols));
        let mut u = vec![0.0; rows * r];
        for i in 0..rows {
            u[i * r..(i + 1) * r].copy_from_slice(&dec.u[i * dec.k..i * dec.k + r]);
        }
        let mut next = dec.vt[..r * cols].to_vec();
        for (j, s) in dec.s[..r].iter().enumerate() {
            next[j * cols..(j + 1) * cols].iter_mut().for_each(|v| *v *= s);
        }
        cores.push(TtCore::new(left, n, r, u)?);
        rest = next;
        left = r;
    }
    TtFormat::new(cores)
}

/// Rank truncation: right-to-left orthogonalization, then a left-to-right
/// truncated SVD sweep.
pub fn tt_round(tt: &TtFormat, max_rank: usize, tol: f64) -> Result<TtFormat> {
    if max_rank == 0 {
        return Err(TnpError::Range("max_rank must be positive".into()));
    }
    if tol < 0.0 || !tol.is_finite() {
        return Err(TnpError::Range(format!("tolerance {tol} must be nonnegative")));
    }
    let d = tt.order();
    if d == 1 {
        return Ok(tt.clone());
    }
    let mut cores = tt.cores.clone();

    // Right-orthogonalize cores D..2 via QR of their transposed unfoldings.
    for k in (1..d).rev() {
        let (l, n, r) = cores[k].shape();
        let unfold_t = linalg::transpose(&cores[k].data, l, n * r); // (n·r) × l
        let (q, rr, kk) = linalg::qr(&unfold_t, n * r, l);
        // core_k = rrᵀ (l×kk) · qᵀ (kk × n·r)
        cores[k] = TtCore::new(kk, n, r, linalg::transpose(&q, n * r, kk))?;
        let rt = linalg::transpose(&rr, kk, l); // l × kk
        let prev = &cores[k - 1];
        let (pl, pn, _) = prev.shape();
        let merged = matmul(&prev.data, pl * pn, l, &rt, kk);
        cores[k - 1] = TtCore::new(pl, pn, kk, merged)?;
    }

    // Left-to-right truncation; the norm lives in the current core.
    let total_tol = tol / ((d - 1) as f64).sqrt();
    for k in 0..d - 1 {
        let (l, n, r) = cores[k].shape();
        let dec = linalg::svd(&cores[k].data, l * n, r);
        let keep = linalg::truncation_rank(&dec.s, max_rank, total_tol, (l * n, r));
        let mut u = vec![0.0; l * n * keep];
        for i in 0..l * n {
            u[i * keep..(i + 1) * keep].copy_from_slice(&dec.u[i * dec.k..i * dec.k + keep]);
        }
        let mut svt = dec.vt[..keep * r].to_vec();
        for (j, s) in dec.s[..keep].iter().enumerate() {
            svt[j * r..(j + 1) * r].iter_mut().for_each(|v| *v *= s);
        }
        cores[k] = TtCore::new(l, n, keep, u)?;
        let (_, nn, rr) = cores[k + 1].shape();
        let next = matmul(&svt, keep, r, &cores[k + 1].data, nn * rr);
        cores[k + 1] = TtCore::new(keep, nn, rr, next)?;
    }
    TtFormat::new(cores)
}

/// Gradients of `⟨residual, contract(tt)⟩` with respect to every core.
///
/// When `residual = contract(tt) − target` these are the gradients of
/// `½‖contract(tt) − target‖²`. Any image-space gradient pulled back into
/// tensor layout can be passed as well.
pub fn mse_core_gradients(tt: &TtFormat, residual: &DenseTensor) -> Result<Vec<TtCore>> {
    let right = right_environments(tt);
    core_gradients_with_envs(tt, residual, &right)
}

pub(crate) fn core_gradients_with_envs(
    tt: &TtFormat,
    residual: &DenseTensor,
    right: &[Vec<f64>],
) -> Result<Vec<TtCore>> {
    if residual.shape() != tt.modes().as_slice() {
        return Err(structure(format!(
            "residual shape {:?} does not match modes {:?}",
            residual.shape(),
            tt.modes()
        )));
    }
    let d = tt.order();
    let mut grads = Vec::with_capacity(d);
    // Residual projected onto the left partial products, as r_{k-1}·I_k × rest.
    let mut projected = residual.data().to_vec();
    let mut cols = residual.len();
    for k in 0..d {
        let c = &tt.cores[k];
        cols /= c.mode;
        let rows = c.left * c.mode;
        let g = matmul_nt(&projected, rows, cols, &right[k + 1], c.right);
        grads.push(TtCore::new(c.left, c.mode, c.right, g)?);
        if k + 1 < d {
            projected = matmul_tn(&c.data, rows, c.right, &projected, cols);
        }
    }
    Ok(grads)
}
