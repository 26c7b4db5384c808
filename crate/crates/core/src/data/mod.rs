//! Rasters, resampling, edge maps, paired samples and dataset sources.

mod canny;
mod image;
mod ingest;
mod pairs;
mod resize;
mod synth;

use thiserror::Error;

pub use canny::{canny_edges, gaussian_taps, gradient_magnitude, to_grayscale, CannyParams, LUMA};
pub use image::{hconcat, ImageBuffer};
pub use ingest::{
    load_split, read_manifest, scan_directory, write_manifest, CropPolicy, DatasetManifest, DatasetSource,
    Split,
};
pub use pairs::{
    from_network_range, images_to_tensor, make_pair, tensor_to_images, to_network_range, PairSpec, SampleBatch, Task,
};
pub use resize::{bicubic_resize, center_crop_resize, cubic_kernel, random_crop, random_crop_offset, CUBIC_A};
pub use synth::{synth_dataset, synth_image, Family};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("expected {expected} channel(s), got {actual}")]
    Channels { expected: usize, actual: usize },
    #[error("{0}")]
    Invalid(String),
    #[error("image {width}x{height} is smaller than the requested {side}x{side} side")]
    TooSmall { width: usize, height: usize, side: usize },
    #[error("unsupported bit depth {0} (only 8-bit PNG is accepted)")]
    UnsupportedBitDepth(u8),
    #[error("PNG decode failed: {0}")]
    Decode(String),
    #[error("PNG encode failed: {0}")]
    Encode(String),
    #[error("no decodable PNG images in {0}")]
    EmptyDirectory(std::path::PathBuf),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        DataError::Invalid(msg.into())
    }
}
