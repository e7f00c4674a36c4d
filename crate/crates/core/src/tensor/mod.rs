//! Dense and tensor-train linear algebra.

mod dense;
pub mod linalg;
mod mpo;
mod tt;

pub use dense::{DenseTensor, DEFAULT_ELEMENT_BUDGET};
pub use mpo::{identity_mpo, mpo_apply, MpoCore, MpoFormat};
pub(crate) use tt::{core_gradients_with_envs, right_environments};
pub use tt::{mse_core_gradients, tt_contract, tt_contract_with_budget, tt_round, tt_svd, TtCore, TtFormat};
