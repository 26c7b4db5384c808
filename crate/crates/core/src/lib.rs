//! Paired image-to-image GAN training with a PSNR/SSIM/FID measurement suite.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`] and [`autograd`]: dense float arrays and a reverse-mode tape
//!   covering every primitive the networks use.
//! - [`nn`]: generator/discriminator topologies and the checkpoint archive.
//! - [`data`]: rasters, bicubic resampling, Canny edges, paired samples,
//!   synthetic dataset families and PNG directory ingestion.
//! - [`metrics`]: PSNR, SSIM, Gaussian fitting, PSD square root and FID.
//! - [`train`]: losses, Adam and the alternating G/D loop.
//! - [`experiment`]: run configs and the command implementations behind the
//!   `srgan-bench` binary.

pub mod archive;
pub mod autograd;
pub mod data;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod tensor;
pub mod train;

pub use autograd::{Gradients, Tape, Var};
pub use tensor::{Scalar, Tensor, TensorError};
