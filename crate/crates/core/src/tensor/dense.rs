use crate::error::{structure, Result, TnpError};

/// Upper bound on the number of elements a dense materialization may hold.
pub const DEFAULT_ELEMENT_BUDGET: usize = 1 << 28;

/// N-order array stored in row-major order (last index fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(structure(format!("invalid shape {shape:?}")));
        }
        let len = checked_len(&shape)?;
        if len != data.len() {
            return Err(structure(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(TnpError::NonFinite("DenseTensor::new".into()));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = checked_len(&shape)?;
        Self::new(shape, vec![0.0; len])
    }

    /// Builds a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = checked_len(&shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            for k in (0..shape.len()).rev() {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Self::new(shape, data)
    }

    pub(crate) fn from_parts_unchecked(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        idx.iter().zip(&self.shape).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Same data viewed under another shape with the same element count.
    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(structure(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_parts_unchecked(self.shape.clone(), data))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_parts_unchecked(self.shape.clone(), self.data.iter().map(|v| v * s).collect())
    }

    /// ‖self − other‖ / ‖other‖, falling back to the absolute error when
    /// `other` is zero.
    pub fn relative_error(&self, other: &Self) -> Result<f64> {
        let diff = self.sub(other)?.norm();
        let base = other.norm();
        Ok(if base > 0.0 { diff / base } else { diff })
    }
}

pub(crate) fn checked_len(shape: &[usize]) -> Result<usize> {
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or(TnpError::Capacity {
            requested: usize::MAX,
            budget: DEFAULT_ELEMENT_BUDGET,
        })
}
