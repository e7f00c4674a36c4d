//! Image quality metrics, perturbation statistics and noise generators.

pub mod kl;
pub mod noise;
pub mod quality;
pub mod ssim;

pub use kl::{
    downsample_distribution_sweep, histogram, kl_of_histogram, kl_vs_gaussian, Downsampler, Histogram, LevelStats,
    DEFAULT_BINS,
};
pub use noise::{gen_noise, perturb, NoiseKind, NoiseSpec, GAUSSIAN_STD, STRUCTURED_EPS};
pub use quality::{mse, nrmse, psnr, MetricReport, Nrmse, PairRole};
pub use ssim::{ssim, ssim_grad, Ssim};
