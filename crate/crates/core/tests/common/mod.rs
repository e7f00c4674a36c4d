//! Brute-force oracles and random instance generators shared by the
//! integration tests. Nothing here calls the contraction or operator code
//! under test.

#![allow(dead_code)]

use rand::Rng;
use tnp_core::image::ImageGrid;
use tnp_core::tensor::{MpoCore, MpoFormat, TtCore, TtFormat};

pub fn random_tt(rng: &mut impl Rng, modes: &[usize], max_rank: usize) -> TtFormat {
    let d = modes.len();
    let mut ranks = vec![1; d + 1];
    for r in ranks.iter_mut().take(d).skip(1) {
        *r = rng.random_range(1..=max_rank);
    }
    let cores = (0..d)
        .map(|k| {
            let len = ranks[k] * modes[k] * ranks[k + 1];
            let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            TtCore::new(ranks[k], modes[k], ranks[k + 1], data).unwrap()
        })
        .collect();
    TtFormat::new(cores).unwrap()
}

/// Random mode sizes with at most `max_len` entries in total.
pub fn random_modes(rng: &mut impl Rng, max_len: usize) -> Vec<usize> {
    loop {
        let d = rng.random_range(1..=6);
        let modes: Vec<usize> = (0..d).map(|_| rng.random_range(1..=5)).collect();
        if modes.iter().product::<usize>() <= max_len {
            return modes;
        }
    }
}

pub fn index_of(mut flat: usize, dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        idx[k] = flat % dims[k];
        flat /= dims[k];
    }
    idx
}

/// Entry of a train as the explicit product `G₁(i₁) G₂(i₂) ⋯ G_D(i_D)`.
pub fn tt_entry(tt: &TtFormat, idx: &[usize]) -> f64 {
    let mut row = vec![1.0];
    for (core, &i) in tt.cores().iter().zip(idx) {
        let mut next = vec![0.0; core.right()];
        for (a, &v) in row.iter().enumerate() {
            for (b, n) in next.iter_mut().enumerate() {
                *n += v * core.get(a, i, b);
            }
        }
        row = next;
    }
    row[0]
}

/// Row-major dense tensor by looping over every multi-index.
pub fn brute_contract(tt: &TtFormat) -> Vec<f64> {
    let modes = tt.modes();
    let len: usize = modes.iter().product();
    (0..len).map(|f| tt_entry(tt, &index_of(f, &modes))).collect()
}

pub fn random_mpo(rng: &mut impl Rng, out_dims: &[usize], in_dims: &[usize], max_rank: usize) -> MpoFormat {
    let d = out_dims.len();
    let mut ranks = vec![1; d + 1];
    for r in ranks.iter_mut().take(d).skip(1) {
        *r = rng.random_range(1..=max_rank);
    }
    let cores = (0..d)
        .map(|k| {
            let len = ranks[k] * out_dims[k] * in_dims[k] * ranks[k + 1];
            let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            MpoCore::new(ranks[k], out_dims[k], in_dims[k], ranks[k + 1], data).unwrap()
        })
        .collect();
    MpoFormat::new(cores, d).unwrap()
}

/// `(∏ out) × (∏ in)` matrix of an operator, entry by entry. Cores past the
/// input-bearing ones take input index 0.
pub fn brute_mpo_matrix(op: &MpoFormat) -> (usize, usize, Vec<f64>) {
    let outs = op.out_dims();
    let ins: Vec<usize> = op.in_dims();
    let rows: usize = outs.iter().product();
    let cols: usize = ins.iter().product();
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        let o = index_of(r, &outs);
        for c in 0..cols {
            let i = index_of(c, &ins);
            let mut row = vec![1.0];
            for (k, core) in op.cores().iter().enumerate() {
                let (_, _, _, right) = core.shape();
                let ik = if k < i.len() { i[k] } else { 0 };
                let mut next = vec![0.0; right];
                for (a, &v) in row.iter().enumerate() {
                    for (b, n) in next.iter_mut().enumerate() {
                        *n += v * core.get(a, o[k], ik, b);
                    }
                }
                row = next;
            }
            m[r * cols + c] = row[0];
        }
    }
    (rows, cols, m)
}

pub fn matvec(m: &[f64], rows: usize, cols: usize, v: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| (0..cols).map(|c| m[r * cols + c] * v[c]).sum())
        .collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`, or the plain difference norm when `b` vanishes.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nb = norm(b);
    if nb == 0.0 {
        norm(&diff)
    } else {
        norm(&diff) / nb
    }
}

/// Largest entrywise relative error between an analytic and a finite
/// difference gradient. Entries smaller than `floor` are compared in
/// absolute terms against `floor`.
pub fn max_entry_rel(analytic: &[f64], fd: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(a, f)| (a - f).abs() / a.abs().max(f.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one coordinate at a time.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let v = probe[i];
            probe[i] = v + h;
            let up = f(&probe);
            probe[i] = v - h;
            let down = f(&probe);
            probe[i] = v;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn random_image(rng: &mut impl Rng, h: usize, w: usize, c: usize) -> ImageGrid {
    ImageGrid::from_fn(h, w, c, |_, _, _| rng.random()).unwrap()
}

/// The matrix printed for the `4 → 8` linear interpolation operator.
pub const P_4_TO_8: [[f64; 4]; 8] = [
    [1.0, 0.0, 0.0, 0.0],
    [0.5, 0.5, 0.0, 0.0],
    [0.0, 1.0, 0.0, 0.0],
    [0.0, 0.5, 0.5, 0.0],
    [0.0, 0.0, 1.0, 0.0],
    [0.0, 0.0, 0.5, 0.5],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0, 0.5],
];

/// Dense `2^d → 2^{d+1}` interpolation matrix with the same zero boundary.
pub fn interp_matrix(d: usize) -> Vec<Vec<f64>> {
    let n = 1usize << d;
    (0..2 * n)
        .map(|m| {
            let mut row = vec![0.0; n];
            let k = m / 2;
            if m % 2 == 0 {
                row[k] = 1.0;
            } else {
                row[k] = 0.5;
                if k + 1 < n {
                    row[k + 1] = 0.5;
                }
            }
            row
        })
        .collect()
}

/// Separable interpolation `P X Pᵀ` of one square plane.
pub fn interp_plane(plane: &[f64], d: usize) -> Vec<f64> {
    let p = interp_matrix(d);
    let n = 1usize << d;
    let m = 2 * n;
    let mut tmp = vec![0.0; m * n];
    for r in 0..m {
        for c in 0..n {
            tmp[r * n + c] = (0..n).map(|k| p[r][k] * plane[k * n + c]).sum();
        }
    }
    let mut out = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..m {
            out[r * m + c] = (0..n).map(|k| tmp[r * n + k] * p[c][k]).sum();
        }
    }
    out
}

/// Pixel `(row, col)` of a `2^d` plane in the scale-major quantized order:
/// mode `k` holds bit `d − 1 − k` of the row and column, row bit first.
pub fn morton_oracle(row: usize, col: usize, d: usize) -> usize {
    let mut flat = 0;
    for k in 0..d {
        let bit = d - 1 - k;
        let digit = ((row >> bit) & 1) * 2 + ((col >> bit) & 1);
        flat = flat * 4 + digit;
    }
    flat
}
