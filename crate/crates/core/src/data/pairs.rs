use serde::{Deserialize, Serialize};

use super::{bicubic_resize, canny_edges, to_grayscale, CannyParams, DataError, ImageBuffer};
use crate::tensor::Tensor;

/// The three image-to-image tasks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Bicubic-downscaled RGB input, full-size RGB target.
    Sr,
    /// Grayscale input at the target size.
    Color,
    /// Canny edge map of the target, optionally downscaled.
    Edges,
}

impl Task {
    /// Channels of the network input for this task.
    pub fn input_channels(self) -> usize {
        match self {
            Task::Sr => 3,
            Task::Color | Task::Edges => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sr => "sr",
            Task::Color => "color",
            Task::Edges => "edges",
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Task {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sr" => Ok(Task::Sr),
            "color" => Ok(Task::Color),
            "edges" => Ok(Task::Edges),
            other => Err(DataError::invalid(format!("unknown task `{other}` (expected sr, color or edges)"))),
        }
    }
}

/// How inputs are derived from targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub task: Task,
    pub upscale_exponent: u32,
    #[serde(default)]
    pub canny: CannyParams,
}

impl PairSpec {
    pub fn new(task: Task, upscale_exponent: u32) -> Self {
        Self {
            task,
            upscale_exponent,
            canny: CannyParams::default(),
        }
    }

    pub fn factor(&self) -> usize {
        1usize << self.upscale_exponent
    }

    pub fn validate(&self, side: usize) -> Result<(), DataError> {
        if self.task == Task::Color && self.upscale_exponent != 0 {
            return Err(DataError::invalid(format!(
                "colorization works at the target size; upscale exponent must be 0, got {}",
                self.upscale_exponent
            )));
        }
        if self.upscale_exponent > 16 || side % self.factor() != 0 {
            return Err(DataError::invalid(format!(
                "target side {side} is not divisible by 2^{}",
                self.upscale_exponent
            )));
        }
        Ok(())
    }
}

/// Builds the `(input, target)` pair for one RGB target image.
pub fn make_pair(target: &ImageBuffer, spec: &PairSpec) -> Result<(ImageBuffer, ImageBuffer), DataError> {
    if target.channels() != 3 {
        return Err(DataError::Channels {
            expected: 3,
            actual: target.channels(),
        });
    }
    let (w, h) = (target.width(), target.height());
    spec.validate(w)?;
    spec.validate(h)?;
    let (lw, lh) = (w / spec.factor(), h / spec.factor());
    let input = match spec.task {
        Task::Sr => bicubic_resize(target, lw, lh)?,
        Task::Color => to_grayscale(target)?,
        Task::Edges => {
            // detect at full resolution, then shrink the edge map
            let edges = canny_edges(&to_grayscale(target)?, spec.canny)?;
            bicubic_resize(&edges, lw, lh)?
        }
    };
    Ok((input, target.clone()))
}

/// A batch of aligned pairs as NCHW tensors with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub input: Tensor<f32>,
    pub target: Tensor<f32>,
    pub task: Task,
    pub upscale_exponent: u32,
}

impl SampleBatch {
    pub fn from_pairs(pairs: &[(ImageBuffer, ImageBuffer)], spec: &PairSpec) -> Result<Self, DataError> {
        let first = pairs.first().ok_or_else(|| DataError::invalid("empty batch"))?;
        let f = spec.factor();
        for (i, t) in pairs {
            if !i.same_dims(&first.0) || !t.same_dims(&first.1) {
                return Err(DataError::invalid("images in a batch must share dimensions"));
            }
            if t.width() != i.width() * f || t.height() != i.height() * f {
                return Err(DataError::invalid(format!(
                    "target {}x{} is not the input {}x{} scaled by {f}",
                    t.width(),
                    t.height(),
                    i.width(),
                    i.height()
                )));
            }
        }
        let inputs: Vec<&ImageBuffer> = pairs.iter().map(|p| &p.0).collect();
        let targets: Vec<&ImageBuffer> = pairs.iter().map(|p| &p.1).collect();
        Ok(Self {
            input: images_to_tensor(&inputs)?,
            target: images_to_tensor(&targets)?,
            task: spec.task,
            upscale_exponent: spec.upscale_exponent,
        })
    }

    pub fn len(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Packs same-sized images into an NCHW tensor.
pub fn images_to_tensor(images: &[&ImageBuffer]) -> Result<Tensor<f32>, DataError> {
    let first = images.first().ok_or_else(|| DataError::invalid("no images"))?;
    let (w, h, c) = (first.width(), first.height(), first.channels());
    let mut data = Vec::with_capacity(images.len() * w * h * c);
    for img in images {
        if !img.same_dims(first) {
            return Err(DataError::invalid("images must share dimensions"));
        }
        for ch in 0..c {
            data.extend(img.data().iter().skip(ch).step_by(c));
        }
    }
    Tensor::new(&[images.len(), c, h, w], data).map_err(|e| DataError::invalid(e.to_string()))
}

/// Unpacks an NCHW tensor into images, clamping into `[0, 1]`.
pub fn tensor_to_images(t: &Tensor<f32>) -> Result<Vec<ImageBuffer>, DataError> {
    let (n, c, h, w) = t.dims4().map_err(|e| DataError::invalid(e.to_string()))?;
    let plane = h * w;
    let src = t.data();
    (0..n)
        .map(|i| {
            let s = &src[i * c * plane..(i + 1) * c * plane];
            ImageBuffer::from_fn(w, h, c, |x, y, ch| s[ch * plane + y * w + x])
        })
        .collect()
}

/// Maps `[0, 1]` pixel values into the `[-1, 1]` range networks consume.
pub fn to_network_range(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| v * 2.0 - 1.0)
}

/// Inverse of [`to_network_range`].
pub fn from_network_range(t: &Tensor<f32>) -> Tensor<f32> {
    t.map(|v| (v + 1.0) * 0.5)
}
