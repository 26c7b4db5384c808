//! Feature extractors for FID and the perceptual loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::MetricsError;
use crate::archive::Archive;
use crate::autograd::{Tape, Var};
use crate::data::{bicubic_resize, images_to_tensor, to_grayscale, to_network_range, ImageBuffer};
use crate::tensor::{Scalar, Tensor, TensorError};

/// A deterministic map from an image to a fixed-length vector.
pub trait FeatureExtractor: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn extract(&self, img: &ImageBuffer) -> Result<Vec<f64>, MetricsError>;

    fn extract_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<Vec<f64>>, MetricsError> {
        imgs.iter().map(|i| self.extract(i)).collect()
    }
}

/// Grayscale thumbnail: bicubic to 16×16 and flatten (d = 256).
#[derive(Clone, Copy, Debug, Default)]
pub struct Raw16;

impl FeatureExtractor for Raw16 {
    fn id(&self) -> &str {
        "raw16"
    }

    fn dim(&self) -> usize {
        256
    }

    fn extract(&self, img: &ImageBuffer) -> Result<Vec<f64>, MetricsError> {
        let gray = if img.channels() == 3 { to_grayscale(img)? } else { img.clone() };
        let small = bicubic_resize(&gray, 16, 16)?;
        Ok(small.data().iter().map(|&v| v as f64).collect())
    }
}

/// Seed of the evaluation extractor. The perceptual loss uses a different
/// one so the training signal and the evaluator stay independent.
pub const TINYCONV_SEED: u64 = 0x7153_C0DE;
pub const PERCEPTUAL_SEED: u64 = 0x9E2C_0A11;

const TINYCONV_LAYERS: [(usize, usize, usize); 3] = [(3, 16, 1), (16, 32, 2), (32, 64, 2)];
const TINYCONV_SLOPE: f64 = 0.2;

/// Three random 3×3 convolutions with leaky ReLU, then a global average
/// pool (d = 64). Inputs are RGB mapped to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyConv {
    id: String,
    layers: Vec<(Tensor<f32>, Tensor<f32>, usize)>,
}

impl TinyConv {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = TINYCONV_LAYERS
            .iter()
            .map(|&(cin, cout, stride)| {
                let fan_in = cin * 9;
                let bound = (6.0 / fan_in as f64).sqrt() as f32;
                let w = Tensor::from_fn(&[cout, cin, 3, 3], |_| rng.gen_range(-bound..bound)).expect("static shape");
                let b = Tensor::from_fn(&[cout], |_| rng.gen_range(-0.1..0.1)).expect("static shape");
                (w, b, stride)
            })
            .collect();
        let id = if seed == TINYCONV_SEED {
            "tinyconv".to_string()
        } else {
            format!("tinyconv-{seed:x}")
        };
        Self { id, layers }
    }

    /// The evaluation extractor.
    pub fn standard() -> Self {
        Self::new(TINYCONV_SEED)
    }

    pub fn to_archive(&self) -> Archive {
        let mut tensors = Vec::new();
        for (i, (w, b, _)) in self.layers.iter().enumerate() {
            tensors.push((format!("conv{i}.weight"), w.clone()));
            tensors.push((format!("conv{i}.bias"), b.clone()));
        }
        let strides: Vec<usize> = self.layers.iter().map(|l| l.2).collect();
        let header = serde_json::json!({ "id": self.id, "strides": strides }).to_string();
        Archive { header, tensors }
    }

    /// Loads weights written by [`TinyConv::to_archive`] (or any chain of
    /// 3×3 convolutions stored as `conv{i}.weight` / `conv{i}.bias`).
    pub fn from_archive(archive: &Archive) -> Result<Self, MetricsError> {
        let header: serde_json::Value =
            serde_json::from_str(&archive.header).map_err(|e| MetricsError::Extractor(e.to_string()))?;
        let id = header["id"].as_str().unwrap_or("archive").to_string();
        let strides: Vec<usize> = header["strides"]
            .as_array()
            .ok_or_else(|| MetricsError::Extractor("header lacks `strides`".into()))?
            .iter()
            .map(|v| v.as_u64().map(|s| s as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| MetricsError::Extractor("strides must be integers".into()))?;
        let mut layers = Vec::new();
        let mut prev = 3;
        for (i, stride) in strides.into_iter().enumerate() {
            let get = |n: &str| {
                archive
                    .tensor(&format!("conv{i}.{n}"))
                    .cloned()
                    .ok_or_else(|| MetricsError::Extractor(format!("missing conv{i}.{n}")))
            };
            let (w, b) = (get("weight")?, get("bias")?);
            let s = w.shape();
            if s.len() != 4 || s[1] != prev || s[2] != 3 || s[3] != 3 || b.numel() != s[0] || stride == 0 {
                return Err(MetricsError::Extractor(format!("conv{i} has shape {s:?}")));
            }
            prev = s[0];
            layers.push((w, b, stride));
        }
        if layers.is_empty() {
            return Err(MetricsError::Extractor("no layers".into()));
        }
        Ok(Self { id, layers })
    }

    /// Output channels of the last layer.
    pub fn channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.0.shape()[0])
    }

    /// Feature map before pooling, recorded on `tape` with frozen weights.
    pub fn feature_map<T: Scalar>(&self, tape: &mut Tape<T>, x: Var) -> Result<Var, TensorError> {
        let mut h = x;
        for (w, b, stride) in &self.layers {
            let w = tape.constant(w.cast());
            let b = tape.constant(b.cast());
            h = tape.conv2d(h, w, b, *stride, 1)?;
            h = tape.leaky_relu(h, T::from_f64(TINYCONV_SLOPE));
        }
        Ok(h)
    }

    fn pooled(&self, batch: Tensor<f32>) -> Result<Vec<Vec<f64>>, MetricsError> {
        let mut tape = Tape::<f32>::no_grad();
        let x = tape.constant(batch);
        let fm = self.feature_map(&mut tape, x)?;
        let pooled = tape.global_avg_pool(fm)?;
        let d = self.channels();
        Ok(tape.value(pooled).data().chunks(d).map(|r| r.iter().map(|&v| v as f64).collect()).collect())
    }
}

impl FeatureExtractor for TinyConv {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.channels()
    }

    fn extract(&self, img: &ImageBuffer) -> Result<Vec<f64>, MetricsError> {
        Ok(self.extract_batch(std::slice::from_ref(img))?.remove(0))
    }

    fn extract_batch(&self, imgs: &[ImageBuffer]) -> Result<Vec<Vec<f64>>, MetricsError> {
        let rgb: Vec<ImageBuffer> = imgs.iter().map(|i| i.to_rgb()).collect();
        let refs: Vec<&ImageBuffer> = rgb.iter().collect();
        self.pooled(to_network_range(&images_to_tensor(&refs)?))
    }
}

/// Builds an extractor from its id: `raw16`, `tinyconv`, or a path to an
/// archive of convolution weights.
pub fn extractor_by_id(id: &str) -> Result<Box<dyn FeatureExtractor>, MetricsError> {
    match id {
        "raw16" => Ok(Box::new(Raw16)),
        "tinyconv" => Ok(Box::new(TinyConv::standard())),
        path if path.ends_with(".srgb") => {
            let bytes = std::fs::read(path).map_err(|e| MetricsError::Extractor(format!("{path}: {e}")))?;
            let archive = Archive::decode(&bytes).map_err(|e| MetricsError::Extractor(format!("{path}: {e}")))?;
            Ok(Box::new(TinyConv::from_archive(&archive)?))
        }
        other => Err(MetricsError::Extractor(format!(
            "unknown extractor `{other}` (expected raw16, tinyconv or a .srgb weight archive)"
        ))),
    }
}

const CHUNK: usize = 8;

/// Row `i` is the feature vector of image `i`. Chunks run in parallel and
/// are reassembled in input order.
pub fn extract_features(
    images: &[ImageBuffer],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<Vec<f64>>, MetricsError> {
    let Some(first) = images.first() else {
        return Ok(Vec::new());
    };
    if images.iter().any(|i| i.width() != first.width() || i.height() != first.height()) {
        return Err(MetricsError::Shape("feature extraction needs images of one size".into()));
    }
    let chunks: Vec<&[ImageBuffer]> = images.chunks(CHUNK).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<_> = {
        use rayon::prelude::*;
        chunks.par_iter().map(|c| extractor.extract_batch(c)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<_> = chunks.iter().map(|c| extractor.extract_batch(c)).collect();
    let mut rows = Vec::with_capacity(images.len());
    for p in parts {
        rows.extend(p?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn imgs() -> Vec<ImageBuffer> {
        (0..5)
            .map(|k| ImageBuffer::from_fn(32, 32, 3, |x, y, c| ((x * (k + 1) + y * 3 + c) % 13) as f32 / 12.0).unwrap())
            .collect()
    }

    #[test]
    fn raw16_constant_is_constant() {
        let img = ImageBuffer::filled(40, 40, 3, 0.25).unwrap();
        let f = Raw16.extract(&img).unwrap();
        assert_eq!(f.len(), 256);
        assert!(f.iter().all(|&v| (v - 0.25).abs() < 1e-6));
    }

    #[test]
    fn tinyconv_deterministic_and_order_preserving() {
        let t = TinyConv::standard();
        let set = imgs();
        let a = extract_features(&set, &t).unwrap();
        assert_eq!(a, extract_features(&set, &t).unwrap());
        assert_eq!(a[0].len(), 64);
        let mut rev = set.clone();
        rev.reverse();
        let b = extract_features(&rev, &t).unwrap();
        for i in 0..set.len() {
            assert_eq!(a[i], b[set.len() - 1 - i]);
        }
        // batching does not change per-image features
        assert_eq!(t.extract(&set[2]).unwrap(), a[2]);
    }

    #[test]
    fn archive_round_trip() {
        let t = TinyConv::new(5);
        let back = TinyConv::from_archive(&Archive::decode(&t.to_archive().encode().unwrap()).unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn mixed_sizes_rejected() {
        let mut set = imgs();
        set.push(ImageBuffer::filled(16, 16, 3, 0.0).unwrap());
        assert!(extract_features(&set, &Raw16).is_err());
        assert!(extractor_by_id("inception").is_err());
    }
}
