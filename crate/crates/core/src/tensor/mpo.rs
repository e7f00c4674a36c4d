use super::dense::{checked_len, DenseTensor, DEFAULT_ELEMENT_BUDGET};
use super::tt::{TtCore, TtFormat};
use crate::error::{structure, Result, TnpError};

/// Operator core of shape `(left, out_dim, in_dim, right)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoCore {
    left: usize,
    out_dim: usize,
    in_dim: usize,
    right: usize,
    data: Vec<f64>,
}

impl MpoCore {
    pub fn new(left: usize, out_dim: usize, in_dim: usize, right: usize, data: Vec<f64>) -> Result<Self> {
        let shape = [left, out_dim, in_dim, right];
        if shape.contains(&0) {
            return Err(structure(format!(
                "operator core shape {shape:?} has an empty dimension"
            )));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(structure(format!(
                "operator core shape {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            )));
        }
        Ok(Self {
            left,
            out_dim,
            in_dim,
            right,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.left, self.out_dim, self.in_dim, self.right)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, a: usize, j: usize, i: usize, b: usize) -> f64 {
        self.data[((a * self.out_dim + j) * self.in_dim + i) * self.right + b]
    }
}

/// Matrix product operator.
///
/// Cores past the order of the input train are output-only: they carry
/// `in_dim == 1` and consume no input mode.
#[derive(Debug, Clone, PartialEq)]
pub struct MpoFormat {
    cores: Vec<MpoCore>,
    inputs: usize,
}

impl MpoFormat {
    /// `inputs` is the number of leading input-bearing cores; the remaining
    /// cores must have unit input dimension.
    pub fn new(cores: Vec<MpoCore>, inputs: usize) -> Result<Self> {
        if cores.is_empty() || inputs == 0 || inputs > cores.len() {
            return Err(structure("operator needs at least one input-bearing core"));
        }
        if cores[0].left != 1 || cores[cores.len() - 1].right != 1 {
            return Err(structure("operator boundary ranks must be 1"));
        }
        for pair in cores.windows(2) {
            if pair[0].right != pair[1].left {
                return Err(structure("operator rank mismatch between adjacent cores"));
            }
        }
        if cores[inputs..].iter().any(|c| c.in_dim != 1) {
            return Err(structure("output-only cores must have unit input dimension"));
        }
        Ok(Self { cores, inputs })
    }

    pub fn cores(&self) -> &[MpoCore] {
        &self.cores
    }

    pub fn input_cores(&self) -> usize {
        self.inputs
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![1];
        r.extend(self.cores.iter().map(|c| c.right));
        r
    }

    pub fn in_dims(&self) -> Vec<usize> {
        self.cores[..self.inputs].iter().map(|c| c.in_dim).collect()
    }

    pub fn out_dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.out_dim).collect()
    }

    /// Dense `(∏ out) × (∏ in)` matrix, row-major.
    pub fn to_dense_matrix(&self) -> Result<DenseTensor> {
        let rows = checked_len(&self.out_dims())?;
        let cols = checked_len(&self.in_dims())?;
        let len = rows.saturating_mul(cols);
        if len > DEFAULT_ELEMENT_BUDGET {
            return Err(TnpError::Capacity {
                requested: len,
                budget: DEFAULT_ELEMENT_BUDGET,
            });
        }
        let out_dims = self.out_dims();
        let in_dims = self.in_dims();
        let mut data = vec![0.0; rows * cols];
        let mut out_idx = vec![0; out_dims.len()];
        let mut in_idx = vec![0; in_dims.len()];
        for r in 0..rows {
            unravel(r, &out_dims, &mut out_idx);
            for c in 0..cols {
                unravel(c, &in_dims, &mut in_idx);
                let mut row = vec![1.0];
                for (k, core) in self.cores.iter().enumerate() {
                    let i = if k < self.inputs { in_idx[k] } else { 0 };
                    let mut next = vec![0.0; core.right];
                    for (a, &ra) in row.iter().enumerate() {
                        if ra == 0.0 {
                            continue;
                        }
                        for (b, nb) in next.iter_mut().enumerate() {
                            *nb += ra * core.get(a, out_idx[k], i, b);
                        }
                    }
                    row = next;
                }
                data[r * cols + c] = row[0];
            }
        }
        DenseTensor::new(vec![rows, cols], data)
    }
}

fn unravel(mut flat: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = flat % dims[k];
        flat /= dims[k];
    }
}

/// Applies an operator to a tensor train without densifying. Output ranks
/// are the products of operator and train ranks.
pub fn mpo_apply(op: &MpoFormat, tt: &TtFormat) -> Result<TtFormat> {
    if op.in_dims() != tt.modes() {
        return Err(structure(format!(
            "operator input dims {:?} do not match train modes {:?}",
            op.in_dims(),
            tt.modes()
        )));
    }
    let unit = TtCore::new(1, 1, 1, vec![1.0])?;
    let mut cores = Vec::with_capacity(op.cores.len());
    for (k, w) in op.cores.iter().enumerate() {
        let x = tt.cores().get(k).unwrap_or(&unit);
        let (xl, xn, xr) = x.shape();
        debug_assert_eq!(xn, w.in_dim);
        let left = w.left * xl;
        let right = w.right * xr;
        let mut data = vec![0.0; left * w.out_dim * right];
        for a in 0..w.left {
            for j in 0..w.out_dim {
                for i in 0..w.in_dim {
                    for b in 0..w.right {
                        let wv = w.get(a, j, i, b);
                        if wv == 0.0 {
                            continue;
                        }
                        for c in 0..xl {
                            let row = ((a * xl + c) * w.out_dim + j) * right + b * xr;
                            let src = (c * xn + i) * xr;
                            let xs = &x.data()[src..src + xr];
                            for (o, &xv) in data[row..row + xr].iter_mut().zip(xs) {
                                *o += wv * xv;
                            }
                        }
                    }
                }
            }
        }
        cores.push(TtCore::new(left, w.out_dim, right, data)?);
    }
    TtFormat::new(cores)
}

/// Identity operator on trains with the given modes.
pub fn identity_mpo(modes: &[usize]) -> Result<MpoFormat> {
    let cores = modes
        .iter()
        .map(|&n| {
            let mut data = vec![0.0; n * n];
            for i in 0..n {
                data[i * n + i] = 1.0;
            }
            MpoCore::new(1, n, n, 1, data)
        })
        .collect::<Result<Vec<_>>>()?;
    MpoFormat::new(cores, modes.len())
}
