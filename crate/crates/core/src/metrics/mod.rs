//! PSNR, SSIM and the Fréchet distance between feature Gaussians.

mod features;
mod gaussian;
pub mod linalg;
mod quality;
mod report;

use thiserror::Error;

pub use features::{
    extract_features, extractor_by_id, FeatureExtractor, Raw16, TinyConv, PERCEPTUAL_SEED, TINYCONV_SEED,
};
pub use gaussian::{fid, fit_gaussian, matrix_sqrt_psd, GaussianStats};
pub use linalg::Matrix;
pub use quality::{mse, psnr, ssim, ssim_taps, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{
    fmt_float, score_pair_dirs, score_pair_sets, MetricsReport, MetricsRow, PairScores, CSV_HEADER,
};

use crate::data::DataError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),
    #[error("feature extractor: {0}")]
    Extractor(String),
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
