//! Procedural stand-ins for datasets of "similar kind" images.
//!
//! Each family has its own shapes, palette and a fine grid-aligned texture
//! that does not survive a 4x downscale, so a generator has to learn it as a
//! prior. [`Family::Clutter`] mixes everything into unaligned multi-object
//! scenes and is meant as a hard case, not as part of the 3x3 matrix.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, ImageBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Disks,
    Stripes,
    Blocks,
    Clutter,
}

impl Family {
    pub const MATRIX: [Family; 3] = [Family::Disks, Family::Stripes, Family::Blocks];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Disks => "disks",
            Family::Stripes => "stripes",
            Family::Blocks => "blocks",
            Family::Clutter => "clutter",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Family::Disks => 1,
            Family::Stripes => 2,
            Family::Blocks => 3,
            Family::Clutter => 4,
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Family {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "disks" => Ok(Family::Disks),
            "stripes" => Ok(Family::Stripes),
            "blocks" => Ok(Family::Blocks),
            "clutter" => Ok(Family::Clutter),
            other => Err(DataError::invalid(format!(
                "unknown family `{other}` (expected disks, stripes, blocks or clutter)"
            ))),
        }
    }
}

type Rgb = [f32; 3];

struct Canvas {
    side: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    fn new(side: usize, f: impl Fn(f32, f32) -> Rgb) -> Self {
        let s = side as f32;
        let mut px = Vec::with_capacity(side * side);
        for y in 0..side {
            for x in 0..side {
                px.push(f((x as f32 + 0.5) / s, (y as f32 + 0.5) / s));
            }
        }
        Self { side, px }
    }

    /// Paints `color` wherever `inside(x, y)` holds (pixel coordinates).
    fn paint(&mut self, color: Rgb, inside: impl Fn(f32, f32) -> bool) {
        for y in 0..self.side {
            for x in 0..self.side {
                if inside(x as f32 + 0.5, y as f32 + 0.5) {
                    self.px[y * self.side + x] = color;
                }
            }
        }
    }

    fn texture(&mut self, amp: f32, pattern: impl Fn(usize, usize) -> f32) {
        for y in 0..self.side {
            for x in 0..self.side {
                let d = amp * pattern(x, y);
                for v in &mut self.px[y * self.side + x] {
                    *v += d;
                }
            }
        }
    }

    fn finish(self) -> Result<ImageBuffer, DataError> {
        let side = self.side;
        let data = self.px.into_iter().flatten().collect::<Vec<_>>();
        ImageBuffer::from_fn(side, side, 3, |x, y, c| data[(y * side + x) * 3 + c])
    }
}

fn jitter(rng: &mut ChaCha8Rng, base: Rgb, spread: f32) -> Rgb {
    base.map(|v| (v + rng.gen_range(-spread..=spread)).clamp(0.05, 0.95))
}

fn pick(rng: &mut ChaCha8Rng, palette: &[Rgb], spread: f32) -> Rgb {
    let c = palette[rng.gen_range(0..palette.len())];
    jitter(rng, c, spread)
}

fn lerp(a: Rgb, b: Rgb, t: f32) -> Rgb {
    std::array::from_fn(|i| a[i] + (b[i] - a[i]) * t)
}

/// Same hue, darker: keeps a clear luma gap to [`light`] colors so the
/// outlines survive an edge detector.
fn dark(c: Rgb) -> Rgb {
    c.map(|v| v * 0.3)
}

fn light(c: Rgb) -> Rgb {
    lerp(c, [1.0; 3], 0.25)
}

const WARM: [Rgb; 4] = [[0.85, 0.30, 0.20], [0.95, 0.65, 0.20], [0.90, 0.85, 0.35], [0.70, 0.20, 0.35]];
const COOL: [Rgb; 4] = [[0.15, 0.35, 0.80], [0.20, 0.70, 0.60], [0.10, 0.55, 0.30], [0.55, 0.80, 0.90]];
const MUTED: [Rgb; 4] = [[0.45, 0.40, 0.60], [0.60, 0.60, 0.55], [0.30, 0.30, 0.35], [0.75, 0.70, 0.80]];

/// Diagonal checkerboard with a 2-pixel period.
fn checker(x: usize, y: usize) -> f32 {
    if (x + y) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// One bright column in every four.
fn columns(x: usize, _y: usize) -> f32 {
    if x % 4 == 0 {
        1.5
    } else {
        -0.5
    }
}

/// One bright row in every four.
fn rows(_x: usize, y: usize) -> f32 {
    columns(y, 0)
}

fn disks(rng: &mut ChaCha8Rng, side: usize) -> Canvas {
    let (a, b) = (dark(pick(rng, &WARM, 0.08)), dark(pick(rng, &WARM, 0.08)));
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut c = Canvas::new(side, |u, v| lerp(a, b, (0.5 + (u - 0.5) * ca + (v - 0.5) * sa).clamp(0.0, 1.0)));
    let s = side as f32;
    for _ in 0..rng.gen_range(1..=4) {
        let (cx, cy) = (rng.gen_range(0.15..0.85) * s, rng.gen_range(0.15..0.85) * s);
        let r = rng.gen_range(0.08..0.25) * s;
        let col = light(pick(rng, &WARM, 0.1));
        c.paint(col, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
    }
    c.texture(0.06, checker);
    c
}

fn stripes(rng: &mut ChaCha8Rng, side: usize) -> Canvas {
    let (a, b) = (dark(pick(rng, &COOL, 0.08)), light(pick(rng, &COOL, 0.08)));
    let angle: f32 = rng.gen_range(0.0..std::f32::consts::PI);
    let period = rng.gen_range(0.08..0.2);
    let duty = rng.gen_range(0.3..0.7);
    let phase = rng.gen_range(0.0..1.0);
    let (ca, sa) = (angle.cos(), angle.sin());
    let mut c = Canvas::new(side, |u, v| {
        let t = ((u * ca + v * sa) / period + phase).rem_euclid(1.0);
        if t < duty {
            a
        } else {
            b
        }
    });
    c.texture(0.06, columns);
    c
}

fn blocks(rng: &mut ChaCha8Rng, side: usize) -> Canvas {
    let bg = pick(rng, &MUTED, 0.05);
    let mut c = Canvas::new(side, |_, _| bg);
    let s = side as f32;
    for _ in 0..rng.gen_range(3..=7) {
        let (x0, y0) = (rng.gen_range(0.0..0.8) * s, rng.gen_range(0.0..0.8) * s);
        let (w, h) = (rng.gen_range(0.1..0.5) * s, rng.gen_range(0.1..0.5) * s);
        let col = pick(rng, &MUTED, 0.1);
        c.paint(col, |x, y| x >= x0 && x < x0 + w && y >= y0 && y < y0 + h);
    }
    c.texture(0.06, rows);
    c
}

fn clutter(rng: &mut ChaCha8Rng, side: usize) -> Canvas {
    let palettes = [&WARM, &COOL, &MUTED];
    let p = rng.gen_range(0..3);
    let bg = pick(rng, palettes[p], 0.2);
    let mut c = Canvas::new(side, |_, _| bg);
    let s = side as f32;
    for _ in 0..rng.gen_range(20..=40) {
        let p = rng.gen_range(0..3);
        let col = pick(rng, palettes[p], 0.2);
        let (cx, cy) = (rng.gen_range(0.0..1.0) * s, rng.gen_range(0.0..1.0) * s);
        let r = rng.gen_range(0.02..0.15) * s;
        if rng.gen_bool(0.5) {
            c.paint(col, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= r * r);
        } else {
            let angle: f32 = rng.gen_range(0.0..std::f32::consts::PI);
            let (ca, sa) = (angle.cos(), angle.sin());
            c.paint(col, |x, y| {
                let (dx, dy) = (x - cx, y - cy);
                (dx * ca + dy * sa).abs() <= r && (dy * ca - dx * sa).abs() <= r * 0.3
            });
        }
    }
    let jitter: Vec<f32> = (0..side * side).map(|_| rng.gen_range(-1.0..1.0)).collect();
    c.texture(0.05, |x, y| jitter[y * side + x]);
    c
}

/// Image `index` of `family` under `seed`. Every image has its own
/// deterministic stream, so subsets can be regenerated independently.
pub fn synth_image(family: Family, seed: u64, index: u64, side: usize) -> Result<ImageBuffer, DataError> {
    if side < 8 {
        return Err(DataError::invalid(format!("synthetic side {side} is below the minimum of 8")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((family.stream() << 48) | index);
    let canvas = match family {
        Family::Disks => disks(&mut rng, side),
        Family::Stripes => stripes(&mut rng, side),
        Family::Blocks => blocks(&mut rng, side),
        Family::Clutter => clutter(&mut rng, side),
    };
    canvas.finish()
}

/// The first `n` images of a family.
pub fn synth_dataset(family: Family, n: usize, seed: u64, side: usize) -> Result<Vec<ImageBuffer>, DataError> {
    if n == 0 {
        return Err(DataError::invalid("a synthetic dataset needs at least one image"));
    }
    (0..n as u64).map(|i| synth_image(family, seed, i, side)).collect()
}
