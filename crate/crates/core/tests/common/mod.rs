//! Independent reference implementations used as test oracles. Each one is
//! written the slow, obvious way and shares no code with the library.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Direct six-loop cross-correlation over NCHW input and OIHW weights.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_oracle(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    k: &[f64],
    (o, kh, kw): (usize, usize, usize),
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, usize, usize) {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[oc];
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * c + ic) * h + iy as usize) * w + ix as usize]
                                    * k[((oc * c + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, oh, ow)
}

/// `x · wᵀ + b` with explicit loops.
pub fn dense_oracle(x: &[f64], n: usize, d: usize, w: &[f64], dout: usize, b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n * dout];
    for i in 0..n {
        for j in 0..dout {
            let mut acc = b[j];
            for k in 0..d {
                acc += x[i * d + k] * w[j * d + k];
            }
            out[i * dout + j] = acc;
        }
    }
    out
}

pub type Mat = Vec<Vec<f64>>;

pub fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let (n, m, p) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; p]; n];
    for i in 0..n {
        for k in 0..m {
            for j in 0..p {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn identity(d: usize) -> Mat {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn invert(m: &Mat) -> Mat {
    let d = m.len();
    let mut a: Mat = m.iter().zip(identity(d)).map(|(r, e)| r.iter().copied().chain(e).collect()).collect();
    for col in 0..d {
        let piv = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for v in &mut a[col] {
            *v /= p;
        }
        for r in 0..d {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for cc in 0..2 * d {
                        a[r][cc] -= f * a[col][cc];
                    }
                }
            }
        }
    }
    a.into_iter().map(|r| r[d..].to_vec()).collect()
}

pub fn frobenius(m: &Mat) -> f64 {
    m.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn mat_sub(a: &Mat, b: &Mat) -> Mat {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect()
}

/// Principal square root by the Denman-Beavers coupled iteration
/// `Y ← (Y + Z⁻¹)/2`, `Z ← (Z + Y⁻¹)/2`, starting from `Y = M`, `Z = I`.
pub fn denman_beavers(m: &Mat) -> Mat {
    let d = m.len();
    let mut y = m.clone();
    let mut z = identity(d);
    for _ in 0..100 {
        let yi = invert(&y);
        let zi = invert(&z);
        let ny: Mat = y.iter().zip(&zi).map(|(a, b)| a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect()).collect();
        let nz: Mat = z.iter().zip(&yi).map(|(a, b)| a.iter().zip(b).map(|(p, q)| 0.5 * (p + q)).collect()).collect();
        let delta = frobenius(&mat_sub(&ny, &y)) / frobenius(&ny);
        y = ny;
        z = nz;
        if delta < 1e-14 {
            break;
        }
    }
    y
}

/// Random `AᵀA` with a tall `A`, so the result is PSD and well conditioned.
pub fn random_psd(rng: &mut ChaCha8Rng, d: usize) -> Mat {
    let rows = 2 * d + 2;
    let a: Mat = (0..rows).map(|_| uniform_vec(rng, d, -1.0, 1.0)).collect();
    let mut m = vec![vec![0.0; d]; d];
    for r in &a {
        for i in 0..d {
            for j in 0..d {
                m[i][j] += r[i] * r[j];
            }
        }
    }
    m
}

/// Covariance by the two-pass formula: centre first, then accumulate.
pub fn covariance_two_pass(rows: &[Vec<f64>]) -> (Vec<f64>, Mat) {
    let n = rows.len();
    let d = rows[0].len();
    let mu: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mu[i]) * (r[j] - mu[j]);
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= (n - 1) as f64;
        }
    }
    (mu, cov)
}

/// SSIM by direct 11×11 weighted sums at every valid window position, per
/// channel of a channels-last image, then averaged.
pub fn ssim_oracle(a: &[f32], b: &[f32], w: usize, h: usize, ch: usize, peak: f64) -> f64 {
    const K: usize = 11;
    let sigma = 1.5f64;
    let g: Vec<f64> = (0..K).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let gs: f64 = g.iter().sum();
    let c1 = (0.01 * peak).powi(2);
    let c2 = (0.03 * peak).powi(2);
    let mut total = 0.0;
    for c in 0..ch {
        let mut sum = 0.0;
        let mut count = 0;
        for y0 in 0..=h - K {
            for x0 in 0..=w - K {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..K {
                    for dx in 0..K {
                        let wt = g[dy] * g[dx] / (gs * gs);
                        let i = ((y0 + dy) * w + x0 + dx) * ch + c;
                        let (p, q) = (a[i] as f64, b[i] as f64);
                        ma += wt * p;
                        mb += wt * q;
                        saa += wt * p * p;
                        sbb += wt * q * q;
                        sab += wt * p * q;
                    }
                }
                let va = saa - ma * ma;
                let vb = sbb - mb * mb;
                let cov = sab - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    total / ch as f64
}

/// Textbook Adam on one scalar.
pub fn adam_scalar(x0: f64, grad: impl Fn(f64) -> f64, steps: usize, lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut x, mut m, mut v) = (x0, 0.0, 0.0);
    let mut trace = Vec::with_capacity(steps);
    for t in 1..=steps {
        let g = grad(x);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let mh = m / (1.0 - b1.powi(t as i32));
        let vh = v / (1.0 - b2.powi(t as i32));
        x -= lr * mh / (vh.sqrt() + eps);
        trace.push(x);
    }
    trace
}

/// Keys cubic kernel with a = −0.5, written from its piecewise definition.
pub fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        1.5 * x.powi(3) - 2.5 * x.powi(2) + 1.0
    } else if x < 2.0 {
        -0.5 * x.powi(3) + 2.5 * x.powi(2) - 4.0 * x + 2.0
    } else {
        0.0
    }
}

/// Reference Canny: full 2-D Gaussian kernel, Sobel, 4-bin NMS and an
/// iterate-until-stable hysteresis, all with explicit loops.
pub fn canny_oracle(img: &[f32], w: usize, h: usize, sigma: f64, low: f64, high: f64) -> Vec<u8> {
    let r = (3.0 * sigma).ceil() as isize;
    let mut k = vec![];
    for dy in -r..=r {
        for dx in -r..=r {
            k.push((-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let ks: f64 = k.iter().sum();
    let side = (2 * r + 1) as usize;
    let at = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut blur = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let wt = k[((dy + r) as usize) * side + (dx + r) as usize] / ks;
                    acc += wt * img[at(y as isize + dy, h) * w + at(x as isize + dx, w)] as f64;
                }
            }
            blur[y * w + x] = acc;
        }
    }
    let p = |x: isize, y: isize| blur[at(y, h) * w + at(x, w)];
    let mut mag = vec![0.0; w * h];
    let mut dir = vec![(0isize, 0isize); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (p(x + 1, y - 1) + 2.0 * p(x + 1, y) + p(x + 1, y + 1) - p(x - 1, y - 1) - 2.0 * p(x - 1, y) - p(x - 1, y + 1)) / 4.0;
            let gy = (p(x - 1, y + 1) + 2.0 * p(x, y + 1) + p(x + 1, y + 1) - p(x - 1, y - 1) - 2.0 * p(x, y - 1) - p(x + 1, y - 1)) / 4.0;
            let i = y as usize * w + x as usize;
            mag[i] = (gx * gx + gy * gy).sqrt();
            let mut deg = gy.atan2(gx).to_degrees();
            if deg < 0.0 {
                deg += 180.0;
            }
            dir[i] = if !(22.5..157.5).contains(&deg) {
                (1, 0)
            } else if deg < 67.5 {
                (1, 1)
            } else if deg < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
        }
    }
    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut state = vec![0u8; w * h]; // 0 none, 1 weak, 2 strong
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            let (dx, dy) = dir[i];
            let tol = v * 1e-5;
            if v >= low && v > m(x - dx, y - dy) + tol && v >= m(x + dx, y + dy) - tol {
                state[i] = if v >= high { 2 } else { 1 };
            }
        }
    }
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if state[y * w + x] != 1 {
                    continue;
                }
                let touches = (-1isize..=1).any(|dy| {
                    (-1isize..=1).any(|dx| {
                        let (nx, ny) = (x as isize + dx, y as isize + dy);
                        nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize && state[ny as usize * w + nx as usize] == 2
                    })
                });
                if touches {
                    state[y * w + x] = 2;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    state.iter().map(|&s| u8::from(s == 2)).collect()
}
