//! Model-free adversarial purification with quantized tensor trains.
//!
//! Images are reshaped into quantized tensor trains, fitted coarse-to-fine,
//! and refined at the finer resolutions with a min-max objective that keeps
//! the reconstruction from re-learning small structured perturbations.

pub mod error;
pub mod tensor;

pub use error::{Result, TnpError};
pub mod baselines;
pub mod cli;
pub mod image;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod putt;
pub mod qtt;
pub mod rng;
pub mod synth;
pub mod tnp;
