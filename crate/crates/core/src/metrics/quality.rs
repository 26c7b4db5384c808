use super::MetricsError;
use crate::data::ImageBuffer;

fn check_same(a: &ImageBuffer, b: &ImageBuffer) -> Result<(), MetricsError> {
    if !a.same_dims(b) {
        return Err(MetricsError::Shape(format!(
            "images {}x{}x{} and {}x{}x{} differ in shape",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared error over every sample, accumulated in 64-bit.
pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(s / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64, MetricsError> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian of the SSIM window; the 2-D window is its outer
/// product.
pub fn ssim_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let raw: [f64; SSIM_WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let total: f64 = raw.iter().sum();
    raw.map(|v| v / total)
}

/// Valid-mode separable filtering of a `w × h` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = taps.iter().zip(&row[x..x + k]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * tmp[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], w: usize, h: usize, peak: f64) -> f64 {
    let taps = ssim_taps();
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &taps);
    let mu_b = filter_valid(b, w, h, &taps);
    let e_aa = filter_valid(&aa, w, h, &taps);
    let e_bb = filter_valid(&bb, w, h, &taps);
    let e_ab = filter_valid(&ab, w, h, &taps);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
    }
    total / mu_a.len() as f64
}

/// Mean SSIM over all valid 11×11 Gaussian windows, averaged over channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64, MetricsError> {
    check_same(a, b)?;
    let (w, h, c) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let plane = |img: &ImageBuffer, ch: usize| -> Vec<f64> {
        img.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect()
    };
    let sum: f64 = (0..c).map(|ch| ssim_plane(&plane(a, ch), &plane(b, ch), w, h, peak)).sum();
    Ok(sum / c as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> ImageBuffer {
        ImageBuffer::from_fn(24, 20, 3, |x, y, c| ((x * 5 + y * 3 + c * 11) % 17) as f32 / 16.0).unwrap()
    }

    #[test]
    fn psnr_reference_points() {
        let z = ImageBuffer::filled(4, 4, 1, 0.0).unwrap();
        let o = ImageBuffer::filled(4, 4, 1, 1.0).unwrap();
        assert_eq!(psnr(&z, &z, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&z, &o, 1.0).unwrap().abs() < 1e-12);
        let t = ImageBuffer::filled(4, 4, 1, 0.1).unwrap();
        assert!((psnr(&z, &t, 1.0).unwrap() - 20.0).abs() < 1e-5);
        assert!(psnr(&z, &ramp(), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_and_size_check() {
        let a = ramp();
        assert_eq!(ssim(&a, &a, 1.0).unwrap(), 1.0);
        let tiny = ImageBuffer::filled(10, 10, 1, 0.5).unwrap();
        assert!(ssim(&tiny, &tiny, 1.0).is_err());
    }

    #[test]
    fn ssim_window_sums_to_one() {
        assert!((ssim_taps().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
