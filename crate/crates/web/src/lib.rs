//! Browser demo: synthetic families with live Canny edges, a bicubic
//! down/up round trip scored with PSNR and SSIM, and FID between two
//! families. The `wasm_bindgen` exports are thin wrappers over the plain
//! functions in [`demo`], which are tested natively.

use wasm_bindgen::prelude::*;

pub mod demo;

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// RGBA bytes of one synthetic image.
#[wasm_bindgen]
pub fn family_image(family: &str, seed: u32, index: u32, side: u32) -> Result<Vec<u8>, JsValue> {
    demo::family_image(family, seed as u64, index as u64, side as usize).map_err(js_err)
}

/// RGBA bytes of the Canny edge map of one synthetic image.
#[wasm_bindgen]
pub fn edge_image(
    family: &str,
    seed: u32,
    index: u32,
    side: u32,
    sigma: f32,
    low: f32,
    high: f32,
) -> Result<Vec<u8>, JsValue> {
    demo::edge_image(family, seed as u64, index as u64, side as usize, sigma, low, high).map_err(js_err)
}

#[wasm_bindgen]
pub struct RoundTrip {
    inner: demo::RoundTrip,
}

#[wasm_bindgen]
impl RoundTrip {
    /// Low-resolution input, nearest-neighbour enlarged to full size.
    pub fn low_res_rgba(&self) -> Vec<u8> {
        self.inner.low_res_rgba.clone()
    }

    pub fn restored_rgba(&self) -> Vec<u8> {
        self.inner.restored_rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn psnr_db(&self) -> f64 {
        self.inner.psnr_db
    }

    #[wasm_bindgen(getter)]
    pub fn ssim(&self) -> f64 {
        self.inner.ssim
    }
}

/// Downscales by `2^exponent` and back with bicubic resampling.
#[wasm_bindgen]
pub fn bicubic_round_trip(family: &str, seed: u32, index: u32, side: u32, exponent: u32) -> Result<RoundTrip, JsValue> {
    demo::bicubic_round_trip(family, seed as u64, index as u64, side as usize, exponent)
        .map(|inner| RoundTrip { inner })
        .map_err(js_err)
}

/// FID between `n` images of each of two families.
#[wasm_bindgen]
pub fn family_fid(a: &str, b: &str, n: u32, seed: u32, side: u32, extractor: &str) -> Result<f64, JsValue> {
    demo::family_fid(a, b, n as usize, seed as u64, side as usize, extractor).map_err(js_err)
}
