use srgan_core::data::{bicubic_resize, canny_edges, synth_dataset, synth_image, to_grayscale, CannyParams, Family, ImageBuffer};
use srgan_core::metrics::{extract_features, extractor_by_id, fid, fit_gaussian, psnr, ssim};

/// Largest side the page may request; keeps a slider from freezing the tab.
pub const MAX_SIDE: usize = 256;

fn family(name: &str) -> Result<Family, String> {
    name.parse().map_err(|e| format!("{e}"))
}

fn check_side(side: usize) -> Result<(), String> {
    if (16..=MAX_SIDE).contains(&side) {
        Ok(())
    } else {
        Err(format!("side must be between 16 and {MAX_SIDE}, got {side}"))
    }
}

/// Canvas `ImageData` layout: 8-bit RGBA, opaque.
pub fn to_rgba(img: &ImageBuffer) -> Vec<u8> {
    let rgb = img.to_rgb().to_bytes8();
    rgb.chunks_exact(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

pub fn family_image(name: &str, seed: u64, index: u64, side: usize) -> Result<Vec<u8>, String> {
    check_side(side)?;
    let img = synth_image(family(name)?, seed, index, side).map_err(|e| e.to_string())?;
    Ok(to_rgba(&img))
}

pub fn edge_image(
    name: &str,
    seed: u64,
    index: u64,
    side: usize,
    sigma: f32,
    low: f32,
    high: f32,
) -> Result<Vec<u8>, String> {
    check_side(side)?;
    let img = synth_image(family(name)?, seed, index, side).map_err(|e| e.to_string())?;
    let gray = to_grayscale(&img).map_err(|e| e.to_string())?;
    let edges = canny_edges(&gray, CannyParams { sigma, low, high }).map_err(|e| e.to_string())?;
    Ok(to_rgba(&edges))
}

#[derive(Clone, Debug)]
pub struct RoundTrip {
    pub low_res_rgba: Vec<u8>,
    pub restored_rgba: Vec<u8>,
    pub psnr_db: f64,
    pub ssim: f64,
}

fn nearest_enlarge(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer, String> {
    ImageBuffer::from_fn(img.width() * factor, img.height() * factor, img.channels(), |x, y, c| {
        img.get(x / factor, y / factor, c)
    })
    .map_err(|e| e.to_string())
}

pub fn bicubic_round_trip(name: &str, seed: u64, index: u64, side: usize, exponent: u32) -> Result<RoundTrip, String> {
    check_side(side)?;
    let factor = 1usize << exponent.min(8);
    if exponent > 8 || side % factor != 0 || side / factor < 1 {
        return Err(format!("side {side} is not divisible by 2^{exponent}"));
    }
    let img = synth_image(family(name)?, seed, index, side).map_err(|e| e.to_string())?;
    let small = bicubic_resize(&img, side / factor, side / factor).map_err(|e| e.to_string())?;
    let restored = bicubic_resize(&small, side, side).map_err(|e| e.to_string())?;
    Ok(RoundTrip {
        low_res_rgba: to_rgba(&nearest_enlarge(&small, factor)?),
        restored_rgba: to_rgba(&restored),
        psnr_db: psnr(&img, &restored, 1.0).map_err(|e| e.to_string())?,
        ssim: ssim(&img, &restored, 1.0).map_err(|e| e.to_string())?,
    })
}

pub fn family_fid(a: &str, b: &str, n: usize, seed: u64, side: usize, extractor: &str) -> Result<f64, String> {
    check_side(side)?;
    if !(2..=128).contains(&n) {
        return Err(format!("n must be between 2 and 128, got {n}"));
    }
    let ex = extractor_by_id(extractor).map_err(|e| e.to_string())?;
    let stats = |name: &str| -> Result<_, String> {
        let imgs = synth_dataset(family(name)?, n, seed, side).map_err(|e| e.to_string())?;
        let feats = extract_features(&imgs, ex.as_ref()).map_err(|e| e.to_string())?;
        fit_gaussian(&feats).map_err(|e| e.to_string())
    };
    fid(&stats(a)?, &stats(b)?).map_err(|e| e.to_string())
}
