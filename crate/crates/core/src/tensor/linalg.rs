//! Row-major matrix kernels used by the tensor-train sweeps.
//!
//! Matrices are plain `&[f64]` slices with explicit dimensions; the
//! factorizations delegate to faer and convert back to row-major.

use faer::Mat;

/// `a (m×k) · b (k×n)`.
pub fn matmul(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for (row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (&aik, b_row) in row.iter().zip(b.chunks_exact(n)) {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aik * bkj;
            }
        }
    }
    out
}

/// `aᵀ · b` where `a` is k×m and `b` is k×n.
pub fn matmul_tn(a: &[f64], k: usize, m: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for (a_row, b_row) in a.chunks_exact(m).zip(b.chunks_exact(n)) {
        for (&aki, out_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
            if aki == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b_row) {
                *o += aki * bkj;
            }
        }
    }
    out
}

/// `a · bᵀ` where `a` is m×k and `b` is n×k.
pub fn matmul_nt(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![0.0; m * n];
    for (a_row, out_row) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (o, b_row) in out_row.iter_mut().zip(b.chunks_exact(k)) {
            *o = dot(a_row, b_row);
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociating.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// Thin SVD with singular values sorted in decreasing order.
pub struct Svd {
    /// m×k, row-major.
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    /// k×n, row-major.
    pub vt: Vec<f64>,
    pub k: usize,
}

pub fn svd(a: &[f64], m: usize, n: usize) -> Svd {
    let mat = Mat::<f64>::from_fn(m, n, |i, j| a[i * n + j]);
    let dec = mat.thin_svd().expect("SVD iteration converges");
    let (u, vm) = (dec.U(), dec.V());
    let s = dec.S().column_vector();
    let k = m.min(n);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));

    let mut u_out = vec![0.0; m * k];
    let mut vt_out = vec![0.0; k * n];
    let mut s_out = vec![0.0; k];
    for (dst, &src) in order.iter().enumerate() {
        s_out[dst] = s[src];
        for i in 0..m {
            u_out[i * k + dst] = u[(i, src)];
        }
        for j in 0..n {
            vt_out[dst * n + j] = vm[(j, src)];
        }
    }
    Svd {
        u: u_out,
        s: s_out,
        vt: vt_out,
        k,
    }
}

/// Thin QR: `a (m×n) = q (m×k) · r (k×n)` with k = min(m, n).
pub fn qr(a: &[f64], m: usize, n: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mat = Mat::<f64>::from_fn(m, n, |i, j| a[i * n + j]);
    let dec = mat.qr();
    let q = dec.compute_thin_Q();
    let r = dec.thin_R();
    let k = m.min(n);
    let mut q_out = vec![0.0; m * k];
    let mut r_out = vec![0.0; k * n];
    for i in 0..m {
        for j in 0..k {
            q_out[i * k + j] = q[(i, j)];
        }
    }
    for i in 0..k {
        for j in 0..n {
            r_out[i * n + j] = r[(i, j)];
        }
    }
    (q_out, r_out, k)
}

/// Number of singular values to keep under a rank cap and a relative
/// Frobenius tolerance on the discarded tail. Numerically zero values are
/// always dropped, but at least one value is kept.
pub fn truncation_rank(s: &[f64], max_rank: usize, tol: f64, dims: (usize, usize)) -> usize {
    let total: f64 = s.iter().map(|v| v * v).sum();
    if total == 0.0 || s.is_empty() {
        return 1;
    }
    let floor = s[0] * f64::EPSILON * dims.0.max(dims.1) as f64;
    let mut rank = s.iter().take_while(|&&v| v > floor).count().max(1);
    if tol > 0.0 {
        let budget = tol * tol * total;
        let mut tail = 0.0;
        while rank > 1 {
            let next = tail + s[rank - 1] * s[rank - 1];
            if next > budget {
                break;
            }
            tail = next;
            rank -= 1;
        }
    }
    rank.min(max_rank).max(1)
}
