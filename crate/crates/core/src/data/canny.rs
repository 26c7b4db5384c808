//! Grayscale conversion and the Canny edge detector.

use serde::{Deserialize, Serialize};

use super::{DataError, ImageBuffer};

/// BT.601 luma weights.
pub const LUMA: [f32; 3] = [0.299, 0.587, 0.114];

pub fn to_grayscale(img: &ImageBuffer) -> Result<ImageBuffer, DataError> {
    if img.channels() != 3 {
        return Err(DataError::Channels {
            expected: 3,
            actual: img.channels(),
        });
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|p| (LUMA[0] * p[0] + LUMA[1] * p[1] + LUMA[2] * p[2]).clamp(0.0, 1.0))
        .collect();
    ImageBuffer::new(img.width(), img.height(), 1, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    pub sigma: f32,
    pub low: f32,
    pub high: f32,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            low: 0.1,
            high: 0.2,
        }
    }
}

/// Normalized 1-D Gaussian taps with radius `ceil(3σ)`.
pub fn gaussian_taps(sigma: f32) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(0.0) as isize;
    let s2 = 2.0 * (sigma as f64) * (sigma as f64);
    let raw: Vec<f64> = (-radius..=radius)
        .map(|i| if s2 > 0.0 { (-(i * i) as f64 / s2).exp() } else { 1.0 })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| (v / total) as f32).collect()
}

fn blur(src: &[f32], w: usize, h: usize, taps: &[f32]) -> Vec<f32> {
    let r = (taps.len() / 2) as isize;
    let at = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + at(x as isize + k as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * tmp[at(y as isize + k as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Sobel gradients scaled by 1/4, so a unit step has magnitude 1.
fn sobel(src: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let px = |x: isize, y: isize| {
        src[y.clamp(0, h as isize - 1) as usize * w + x.clamp(0, w as isize - 1) as usize]
    };
    let mut gx = vec![0.0f32; w * h];
    let mut gy = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (px(x + 1, y - 1) + 2.0 * px(x + 1, y) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x - 1, y) + px(x - 1, y + 1));
            let dy = (px(x - 1, y + 1) + 2.0 * px(x, y + 1) + px(x + 1, y + 1))
                - (px(x - 1, y - 1) + 2.0 * px(x, y - 1) + px(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx * 0.25;
            gy[i] = dy * 0.25;
        }
    }
    (gx, gy)
}

const TIE_TOLERANCE: f32 = 1e-5;

/// Unit step along the quantized gradient direction (x right, y down).
fn direction(gx: f32, gy: f32) -> (isize, isize) {
    let mut deg = gy.atan2(gx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if !(22.5..157.5).contains(&deg) {
        (1, 0)
    } else if deg < 67.5 {
        (1, 1)
    } else if deg < 112.5 {
        (0, 1)
    } else {
        (-1, 1)
    }
}

/// Gradient magnitude after blur, before suppression. Exposed for tests and
/// the browser demo.
pub fn gradient_magnitude(img: &ImageBuffer, sigma: f32) -> Result<Vec<f32>, DataError> {
    if img.channels() != 1 {
        return Err(DataError::Channels {
            expected: 1,
            actual: img.channels(),
        });
    }
    let (w, h) = (img.width(), img.height());
    let blurred = blur(img.data(), w, h, &gaussian_taps(sigma));
    let (gx, gy) = sobel(&blurred, w, h);
    Ok(gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect())
}

/// Canny edges: Gaussian blur, Sobel gradients, non-maximum suppression
/// along four quantized directions, then double-threshold hysteresis with
/// 8-connectivity. Output pixels are exactly 0 or 1.
pub fn canny_edges(img: &ImageBuffer, params: CannyParams) -> Result<ImageBuffer, DataError> {
    let CannyParams { sigma, low, high } = params;
    if !(low > 0.0 && low < high) {
        return Err(DataError::invalid(format!(
            "canny thresholds must satisfy 0 < low < high, got low={low} high={high}"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(DataError::invalid("canny sigma must be non-negative"));
    }
    if img.channels() != 1 {
        return Err(DataError::Channels {
            expected: 1,
            actual: img.channels(),
        });
    }
    let (w, h) = (img.width(), img.height());
    let blurred = blur(img.data(), w, h, &gaussian_taps(sigma));
    let (gx, gy) = sobel(&blurred, w, h);
    let mag: Vec<f32> = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };

    // Ties along the gradient keep the pixel on the low side, so a symmetric
    // ridge still thins to one pixel. Neighbours within a relative 1e-5 count
    // as tied, which absorbs rounding from the separable blur.
    let mut thin = vec![0.0f32; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v < low {
                continue;
            }
            let (dx, dy) = direction(gx[i], gy[i]);
            let tol = v * TIE_TOLERANCE;
            if v > m(x - dx, y - dy) + tol && v >= m(x + dx, y + dy) - tol {
                thin[i] = v;
            }
        }
    }

    let mut out = vec![0.0f32; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= high).collect();
    for &i in &stack {
        out[i] = 1.0;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if out[j] == 0.0 && thin[j] >= low {
                    out[j] = 1.0;
                    stack.push(j);
                }
            }
        }
    }
    ImageBuffer::new(w, h, 1, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn luma_coefficients() {
        let white = ImageBuffer::filled(2, 2, 3, 1.0).unwrap();
        assert!(to_grayscale(&white).unwrap().data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
        let red = ImageBuffer::from_fn(1, 1, 3, |_, _, c| if c == 0 { 1.0 } else { 0.0 }).unwrap();
        assert!((to_grayscale(&red).unwrap().data()[0] - 0.299).abs() < 1e-7);
        assert!(to_grayscale(&to_grayscale(&red).unwrap()).is_err());
    }

    #[test]
    fn constant_image_has_no_edges() {
        let img = ImageBuffer::filled(20, 20, 1, 0.6).unwrap();
        let e = canny_edges(&img, CannyParams::default()).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_order_enforced() {
        let img = ImageBuffer::filled(8, 8, 1, 0.0).unwrap();
        let bad = CannyParams { sigma: 1.0, low: 0.3, high: 0.2 };
        assert!(canny_edges(&img, bad).is_err());
        let bad = CannyParams { sigma: 1.0, low: 0.0, high: 0.2 };
        assert!(canny_edges(&img, bad).is_err());
    }

    #[test]
    fn gaussian_taps_are_normalized() {
        let t = gaussian_taps(1.0);
        assert_eq!(t.len(), 7);
        assert!((t.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert_eq!(gaussian_taps(0.0), vec![1.0]);
    }
}
