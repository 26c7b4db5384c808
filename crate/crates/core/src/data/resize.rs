use rand::Rng;

use super::image::clamp_unit;
use super::{DataError, ImageBuffer};

/// Keys cubic convolution coefficient (Catmull-Rom family).
pub const CUBIC_A: f64 = -0.5;

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic_kernel(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source taps for one output coordinate: first clamped index per tap and
/// normalized weights.
struct Taps {
    index: Vec<usize>,
    weight: Vec<f64>,
}

/// Sampling plan along one axis. Pixel centres sit at `i + 0.5`. When
/// shrinking, the kernel is stretched by the inverse scale so every source
/// pixel contributes (antialiasing); edges clamp to the border pixel.
fn plan(in_len: usize, out_len: usize) -> Vec<Taps> {
    let scale = out_len as f64 / in_len as f64;
    let stretch = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let support = 2.0 * stretch;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) / scale;
            let lo = (center - support).floor() as isize;
            let hi = (center + support).ceil() as isize;
            let mut index = Vec::new();
            let mut weight = Vec::new();
            for j in lo..=hi {
                let w = cubic_kernel((j as f64 + 0.5 - center) / stretch);
                if w == 0.0 {
                    continue;
                }
                index.push(j.clamp(0, in_len as isize - 1) as usize);
                weight.push(w);
            }
            let total: f64 = weight.iter().sum();
            weight.iter_mut().for_each(|w| *w /= total);
            Taps { index, weight }
        })
        .collect()
}

/// Separable bicubic resampling to `out_w × out_h`; output clamped to `[0, 1]`.
pub fn bicubic_resize(img: &ImageBuffer, out_w: usize, out_h: usize) -> Result<ImageBuffer, DataError> {
    if out_w == 0 || out_h == 0 {
        return Err(DataError::invalid("output size must be at least 1x1"));
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    if (w, h) == (out_w, out_h) {
        return Ok(img.clone());
    }
    let src = img.data();
    let xs = plan(w, out_w);
    let ys = plan(h, out_h);

    // horizontal pass: h × out_w
    let mut tmp = vec![0.0f64; h * out_w * ch];
    for y in 0..h {
        for (x, taps) in xs.iter().enumerate() {
            for c in 0..ch {
                let mut acc = 0.0;
                for (&j, &wt) in taps.index.iter().zip(&taps.weight) {
                    acc += wt * src[(y * w + j) * ch + c] as f64;
                }
                tmp[(y * out_w + x) * ch + c] = acc;
            }
        }
    }
    let mut out = vec![0.0f32; out_h * out_w * ch];
    for (y, taps) in ys.iter().enumerate() {
        for x in 0..out_w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (&j, &wt) in taps.index.iter().zip(&taps.weight) {
                    acc += wt * tmp[(j * out_w + x) * ch + c];
                }
                out[(y * out_w + x) * ch + c] = clamp_unit(acc as f32);
            }
        }
    }
    ImageBuffer::new(out_w, out_h, ch, out)
}

/// Uniformly placed `side × side` crop.
pub fn random_crop(img: &ImageBuffer, side: usize, rng: &mut impl Rng) -> Result<ImageBuffer, DataError> {
    let (x0, y0) = random_crop_offset(img.width(), img.height(), side, rng)?;
    Ok(img.crop(x0, y0, side, side))
}

pub fn random_crop_offset(
    width: usize,
    height: usize,
    side: usize,
    rng: &mut impl Rng,
) -> Result<(usize, usize), DataError> {
    if side == 0 || width < side || height < side {
        return Err(DataError::TooSmall {
            width,
            height,
            side,
        });
    }
    Ok((rng.gen_range(0..=width - side), rng.gen_range(0..=height - side)))
}

/// Central square crop followed by a bicubic resize to `side × side`.
/// Never upscales: the shorter image side must be at least `side`.
pub fn center_crop_resize(img: &ImageBuffer, side: usize) -> Result<ImageBuffer, DataError> {
    let (w, h) = (img.width(), img.height());
    let sq = w.min(h);
    if side == 0 || sq < side {
        return Err(DataError::TooSmall {
            width: w,
            height: h,
            side,
        });
    }
    let cropped = img.crop((w - sq) / 2, (h - sq) / 2, sq, sq);
    bicubic_resize(&cropped, side, side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_values() {
        assert_eq!(cubic_kernel(0.0), 1.0);
        assert_eq!(cubic_kernel(1.0), 0.0);
        assert_eq!(cubic_kernel(2.0), 0.0);
        assert!((cubic_kernel(0.5) - 0.5625).abs() < 1e-12);
        assert!((cubic_kernel(1.5) + 0.0625).abs() < 1e-12);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuffer::filled(13, 9, 3, 0.37).unwrap();
        for (w, h) in [(4, 4), (26, 18), (13, 9), (5, 31)] {
            let out = bicubic_resize(&img, w, h).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.37).abs() < 1e-6));
        }
    }

    #[test]
    fn same_size_is_identity() {
        let img = ImageBuffer::from_fn(7, 5, 1, |x, y, _| ((x * 3 + y * 5) % 7) as f32 / 7.0).unwrap();
        assert_eq!(bicubic_resize(&img, 7, 5).unwrap(), img);
    }

    #[test]
    fn crops_respect_bounds() {
        let img = ImageBuffer::filled(130, 128, 3, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_crop(&img, 128, &mut rng).unwrap();
        assert_eq!((c.width(), c.height()), (128, 128));
        assert!(random_crop(&img, 129, &mut rng).is_err());
        assert!(center_crop_resize(&img, 129).is_err());
        let small = ImageBuffer::filled(178, 218, 3, 0.2).unwrap();
        let r = center_crop_resize(&small, 128).unwrap();
        assert_eq!((r.width(), r.height()), (128, 128));
    }
}
