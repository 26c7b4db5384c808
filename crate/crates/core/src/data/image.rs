use std::fs::File;
use std::io::{BufWriter, Cursor};
use std::path::Path;

use super::DataError;

/// A decoded raster: channels-last, unit-interval floats, 1 or 3 channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(DataError::Channels { expected: 3, actual: channels });
        }
        if data.len() != width * height * channels {
            return Err(DataError::invalid(format!(
                "buffer of {} values for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(DataError::invalid(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Builds from a per-sample function; values are clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self, DataError> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(x, y, c)));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self, DataError> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Copies one channel out as a 1-channel image.
    pub fn channel(&self, c: usize) -> Self {
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        Self {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Replicates a 1-channel image to 3 channels; 3-channel images are cloned.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    /// Sub-rectangle copy; caller guarantees bounds.
    pub(crate) fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        let mut data = Vec::with_capacity(w * h * self.channels);
        for y in y0..y0 + h {
            let row = (y * self.width + x0) * self.channels;
            data.extend_from_slice(&self.data[row..row + w * self.channels]);
        }
        Self {
            width: w,
            height: h,
            channels: self.channels,
            data,
        }
    }

    pub fn to_bytes8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| (v * 255.0).round() as u8).collect()
    }

    pub fn from_bytes8(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self, DataError> {
        Self::new(width, height, channels, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, DataError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 3 {
                png::ColorType::Rgb
            } else {
                png::ColorType::Grayscale
            });
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc.write_header().map_err(|e| DataError::Encode(e.to_string()))?;
            w.write_image_data(&self.to_bytes8())
                .map_err(|e| DataError::Encode(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DataError> {
        let bytes = self.encode_png()?;
        let mut f = BufWriter::new(File::create(path)?);
        std::io::Write::write_all(&mut f, &bytes)?;
        Ok(())
    }

    /// Decodes an 8-bit PNG into an RGB image. Gray inputs are replicated,
    /// alpha is dropped, palettes are expanded; 16-bit files are rejected.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, DataError> {
        let mut dec = png::Decoder::new(Cursor::new(bytes));
        dec.set_transformations(png::Transformations::EXPAND);
        let mut reader = dec.read_info().map_err(|e| DataError::Decode(e.to_string()))?;
        let depth = reader.info().bit_depth;
        if depth == png::BitDepth::Sixteen {
            return Err(DataError::UnsupportedBitDepth(16));
        }
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| DataError::Decode("image too large".into()))?;
        let mut buf = vec![0u8; size];
        let frame = reader
            .next_frame(&mut buf)
            .map_err(|e| DataError::Decode(e.to_string()))?;
        if frame.bit_depth != png::BitDepth::Eight {
            return Err(DataError::UnsupportedBitDepth(frame.bit_depth as u8));
        }
        let (w, h) = (frame.width as usize, frame.height as usize);
        let px = &buf[..frame.buffer_size()];
        let rgb: Vec<u8> = match frame.color_type {
            png::ColorType::Rgb => px.to_vec(),
            png::ColorType::Rgba => px.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
            png::ColorType::Grayscale => px.iter().flat_map(|&v| [v, v, v]).collect(),
            png::ColorType::GrayscaleAlpha => px.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
            png::ColorType::Indexed => return Err(DataError::Decode("palette not expanded".into())),
        };
        Self::from_bytes8(w, h, 3, &rgb)
    }

    pub fn load_png(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path)?;
        Self::decode_png(&bytes)
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Places images side by side on a white canvas (2-pixel gutters), scaling
/// nothing: every panel is drawn at its native size, top-aligned.
pub fn hconcat(panels: &[ImageBuffer]) -> Result<ImageBuffer, DataError> {
    if panels.is_empty() {
        return Err(DataError::invalid("no panels to concatenate"));
    }
    let gutter = 2;
    let width = panels.iter().map(|p| p.width()).sum::<usize>() + gutter * (panels.len() - 1);
    let height = panels.iter().map(|p| p.height()).max().unwrap_or(1);
    let mut data = vec![1.0f32; width * height * 3];
    let mut x0 = 0;
    for p in panels {
        let p = p.to_rgb();
        for y in 0..p.height() {
            for x in 0..p.width() {
                for c in 0..3 {
                    data[(y * width + x0 + x) * 3 + c] = p.get(x, y, c);
                }
            }
        }
        x0 += p.width() + gutter;
    }
    ImageBuffer::new(width, height, 3, data)
}
