//! Gradient descent on tensor-train cores with backtracking.

use crate::error::{Result, TnpError};
use crate::tensor::{core_gradients_with_envs, right_environments, DenseTensor, TtFormat};

/// Maximum number of step halvings tried before a step is abandoned.
pub const MAX_HALVINGS: usize = 20;

/// Loss above `DIVERGENCE_FACTOR × initial loss` aborts the optimization.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

/// A tensor train together with its cached right environments; the first
/// environment is the dense contraction in quantized layout.
#[derive(Debug, Clone)]
pub(crate) struct TrackedTt {
    pub tt: TtFormat,
    right: Vec<Vec<f64>>,
}

impl TrackedTt {
    pub fn new(tt: TtFormat) -> Self {
        let right = right_environments(&tt);
        Self { tt, right }
    }

    /// Dense values in quantized (row-major tensor) layout.
    pub fn values(&self) -> &[f64] {
        &self.right[0]
    }

    /// Core gradients of `⟨g, contract(tt)⟩` for a tensor-space `g`.
    pub fn pullback(&self, g: Vec<f64>) -> Result<Vec<crate::tensor::TtCore>> {
        let residual = DenseTensor::new(self.tt.modes(), g)?;
        core_gradients_with_envs(&self.tt, &residual, &self.right)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss_before: f64,
    pub loss_after: f64,
    /// Step size that was accepted, or 0 if every halving failed.
    pub beta: f64,
    pub halvings: usize,
    /// Whether the train changed.
    pub moved: bool,
}

/// One descent step along `−direction` starting at size `beta`, halving
/// until `loss` does not increase. On total failure the train is unchanged.
pub(crate) fn backtracking_step(
    state: &mut TrackedTt,
    direction: &[crate::tensor::TtCore],
    beta: f64,
    loss_before: f64,
    mut loss: impl FnMut(&[f64]) -> f64,
) -> Result<StepReport> {
    if direction.iter().all(|c| c.data().iter().all(|&v| v == 0.0)) {
        return Ok(StepReport {
            loss_before,
            loss_after: loss_before,
            beta,
            halvings: 0,
            moved: false,
        });
    }
    let mut step = beta;
    for halvings in 0..=MAX_HALVINGS {
        let candidate = match state.tt.axpy(-step, direction) {
            Ok(tt) => TrackedTt::new(tt),
            Err(TnpError::NonFinite(_)) => {
                step *= 0.5;
                continue;
            }
            Err(e) => return Err(e),
        };
        let after = loss(candidate.values());
        if after.is_finite() && after <= loss_before {
            *state = candidate;
            return Ok(StepReport {
                loss_before,
                loss_after: after,
                beta: step,
                halvings,
                moved: true,
            });
        }
        step *= 0.5;
    }
    Ok(StepReport {
        loss_before,
        loss_after: loss_before,
        beta: 0.0,
        halvings: MAX_HALVINGS,
        moved: false,
    })
}

pub(crate) fn check_divergence(loss: f64, initial: f64, beta: f64) -> Result<()> {
    let limit = DIVERGENCE_FACTOR * initial.max(f64::MIN_POSITIVE);
    if !loss.is_finite() || loss > limit {
        return Err(TnpError::Divergence { beta, loss, limit });
    }
    Ok(())
}
