//! Forward kernels for the network primitives, plus the backward kernels the
//! tape calls into. Every function here is pure.

use super::{Result, Scalar, Tensor, TensorError};

/// Resolved sizes for one convolution call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn resolve(input: &[usize], weight: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [batch, in_channels, in_h, in_w] = *input else {
            return Err(TensorError::Rank {
                expected: 4,
                shape: input.to_vec(),
            });
        };
        let [out_channels, w_in, kh, kw] = *weight else {
            return Err(TensorError::Rank {
                expected: 4,
                shape: weight.to_vec(),
            });
        };
        if w_in != in_channels {
            return Err(TensorError::dim("conv2d", "in_channels", in_channels, w_in));
        }
        if kh != kw {
            return Err(TensorError::invalid("conv2d", format!("non-square kernel {kh}x{kw}")));
        }
        if kh % 2 == 0 {
            return Err(TensorError::invalid("conv2d", format!("kernel size {kh} is even")));
        }
        if stride == 0 {
            return Err(TensorError::invalid("conv2d", "stride must be at least 1"));
        }
        let out = |side: usize, name: &str| {
            let padded = side + 2 * pad;
            if padded < kh {
                return Err(TensorError::invalid(
                    "conv2d",
                    format!("padded {name} {padded} is smaller than kernel {kh}"),
                ));
            }
            Ok((padded - kh) / stride + 1)
        };
        Ok(Self {
            batch,
            in_channels,
            in_h,
            in_w,
            out_channels,
            kernel: kh,
            stride,
            pad,
            out_h: out(in_h, "height")?,
            out_w: out(in_w, "width")?,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    fn in_sample(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    fn out_sample(&self) -> usize {
        self.out_channels * self.out_plane()
    }

    /// Range of output columns whose tap `kj` lands inside the input row.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if kj >= self.pad { 0 } else { (self.pad - kj).div_ceil(s) };
        // ow*s + kj - pad <= in_w - 1
        let hi = if self.in_w + self.pad < kj + 1 {
            0
        } else {
            ((self.in_w + self.pad - kj - 1) / s + 1).min(self.out_w)
        };
        (lo.min(hi), hi)
    }

    /// Unfolds one sample into a `patch_len × out_plane` column matrix.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let plane = self.out_plane();
        for ci in 0..self.in_channels {
            let xc = &x[ci * self.in_h * self.in_w..(ci + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let dst = &mut cols[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.valid_cols(kj);
                    for oh in 0..self.out_h {
                        let line = &mut dst[oh * self.out_w..(oh + 1) * self.out_w];
                        let ih = (oh * s + ki) as isize - p as isize;
                        if ih < 0 || ih >= self.in_h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &xc[ih as usize * self.in_w..(ih as usize + 1) * self.in_w];
                        line[..lo].fill(T::zero());
                        line[hi..].fill(T::zero());
                        if lo == hi {
                            continue;
                        }
                        if s == 1 {
                            let start = lo + kj - p;
                            line[lo..hi].copy_from_slice(&src[start..start + (hi - lo)]);
                        } else {
                            for (ow, v) in line.iter_mut().enumerate().take(hi).skip(lo) {
                                *v = src[ow * s + kj - p];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Accumulates a column matrix back into one input sample.
    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (k, s, p) = (self.kernel, self.stride, self.pad);
        let plane = self.out_plane();
        for ci in 0..self.in_channels {
            let dxc = &mut dx[ci * self.in_h * self.in_w..(ci + 1) * self.in_h * self.in_w];
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let src = &cols[row * plane..(row + 1) * plane];
                    let (lo, hi) = self.valid_cols(kj);
                    for oh in 0..self.out_h {
                        let ih = (oh * s + ki) as isize - p as isize;
                        if ih < 0 || ih >= self.in_h as isize {
                            continue;
                        }
                        let line = &src[oh * self.out_w..(oh + 1) * self.out_w];
                        let dst = &mut dxc[ih as usize * self.in_w..(ih as usize + 1) * self.in_w];
                        for ow in lo..hi {
                            dst[ow * s + kj - p] = dst[ow * s + kj - p] + line[ow];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(feature = "parallel")]
fn for_each_chunk<T, F>(buf: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    use rayon::prelude::*;
    buf.par_chunks_mut(chunk)
        .enumerate()
        .for_each(|(i, c)| f(i, c));
}

#[cfg(not(feature = "parallel"))]
fn for_each_chunk<T, F>(buf: &mut [T], chunk: usize, f: F)
where
    F: Fn(usize, &mut [T]),
{
    buf.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

#[cfg(debug_assertions)]
fn check_finite<T: Scalar>(op: &'static str, inputs: &[&[T]], out: &[T]) -> Result<()> {
    if out.iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    if inputs.iter().all(|s| s.iter().all(|v| v.is_finite())) {
        return Err(TensorError::NonFinite { op });
    }
    Ok(())
}

#[cfg(not(debug_assertions))]
#[inline(always)]
fn check_finite<T: Scalar>(_: &'static str, _: &[&[T]], _: &[T]) -> Result<()> {
    Ok(())
}

/// 2-D cross-correlation with zero padding. Output side is
/// `(side + 2·pad − k) / stride + 1`, rounded down.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::resolve(input.shape(), weight.shape(), stride, pad)?;
    if bias.numel() != g.out_channels {
        return Err(TensorError::dim("conv2d", "bias", g.out_channels, bias.numel()));
    }
    let mut out = vec![T::zero(); g.batch * g.out_sample()];
    let (x, w, b) = (input.data(), weight.data(), bias.data());
    let plane = g.out_plane();
    let patch = g.patch_len();
    for_each_chunk(&mut out, g.out_sample(), |n, dst| {
        let mut cols = vec![T::zero(); patch * plane];
        g.im2col(&x[n * g.in_sample()..(n + 1) * g.in_sample()], &mut cols);
        T::gemm(
            g.out_channels,
            patch,
            plane,
            T::one(),
            (w, patch as isize, 1),
            (&cols, plane as isize, 1),
            T::zero(),
            (dst, plane as isize, 1),
        );
        for (co, row) in dst.chunks_mut(plane).enumerate() {
            let bc = b[co];
            row.iter_mut().for_each(|v| *v = *v + bc);
        }
    });
    check_finite("conv2d", &[x, w, b], &out)?;
    Tensor::new(&[g.batch, g.out_channels, g.out_h, g.out_w], out)
}

/// Gradients of [`conv2d`]; each requested buffer is returned in the layout of
/// its forward operand.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeometry,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let plane = g.out_plane();
    let patch = g.patch_len();

    let mut db = vec![T::zero(); g.out_channels];
    for n in 0..g.batch {
        let dy = &grad_out[n * g.out_sample()..(n + 1) * g.out_sample()];
        for (co, row) in dy.chunks(plane).enumerate() {
            db[co] = db[co] + row.iter().fold(T::zero(), |a, &v| a + v);
        }
    }

    let dx = want_input.then(|| {
        let mut dx = vec![T::zero(); g.batch * g.in_sample()];
        for_each_chunk(&mut dx, g.in_sample(), |n, dst| {
            let dy = &grad_out[n * g.out_sample()..(n + 1) * g.out_sample()];
            let mut dcols = vec![T::zero(); patch * plane];
            T::gemm(
                patch,
                g.out_channels,
                plane,
                T::one(),
                (weight, 1, patch as isize),
                (dy, plane as isize, 1),
                T::zero(),
                (&mut dcols, plane as isize, 1),
            );
            g.col2im(&dcols, dst);
        });
        dx
    });

    let dw = want_weight.then(|| {
        // Per-sample partials reduced in index order keep the result
        // independent of the worker count.
        let mut partial = vec![T::zero(); g.batch * g.out_channels * patch];
        for_each_chunk(&mut partial, g.out_channels * patch, |n, dst| {
            let dy = &grad_out[n * g.out_sample()..(n + 1) * g.out_sample()];
            let mut cols = vec![T::zero(); patch * plane];
            g.im2col(&input[n * g.in_sample()..(n + 1) * g.in_sample()], &mut cols);
            T::gemm(
                g.out_channels,
                plane,
                patch,
                T::one(),
                (dy, plane as isize, 1),
                (&cols, 1, plane as isize),
                T::zero(),
                (dst, patch as isize, 1),
            );
        });
        let mut dw = vec![T::zero(); g.out_channels * patch];
        for chunk in partial.chunks(g.out_channels * patch) {
            dw.iter_mut().zip(chunk).for_each(|(a, &b)| *a = *a + b);
        }
        dw
    });

    (dx, dw, db)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BnMode {
    Train,
    Infer,
}

/// Per-channel running statistics tracked by batch normalization.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T: Scalar = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// Exponential moving average update from one batch. `batch_var` is the
    /// biased batch variance; the running estimate stores the unbiased one.
    pub fn update(&mut self, batch_mean: &[T], batch_var: &[T], count: usize, momentum: T) {
        let correction = T::from_f64(count as f64 / (count as f64 - 1.0));
        let keep = T::one() - momentum;
        for c in 0..self.mean.len() {
            self.mean[c] = keep * self.mean[c] + momentum * batch_mean[c];
            self.var[c] = keep * self.var[c] + momentum * batch_var[c] * correction;
        }
    }
}

/// Saved state from a training-mode normalization, enough for the backward
/// pass and for the running-statistics update.
#[derive(Clone, Debug)]
pub(crate) struct BnBatch<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub count: usize,
}

fn bn_check<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    if gamma.numel() != c {
        return Err(TensorError::dim("batch_norm2d", "gamma", c, gamma.numel()));
    }
    if beta.numel() != c {
        return Err(TensorError::dim("batch_norm2d", "beta", c, beta.numel()));
    }
    if eps.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
        return Err(TensorError::invalid("batch_norm2d", "eps must be positive"));
    }
    Ok((n, c, h * w))
}

pub(crate) fn bn_train_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, BnBatch<T>)> {
    let (n, c, plane) = bn_check(input, gamma, beta, eps)?;
    let count = n * plane;
    if count < 2 {
        return Err(TensorError::invalid(
            "batch_norm2d",
            format!("training mode needs at least 2 values per channel, got {count}"),
        ));
    }
    let x = input.data();
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    let mut inv_std = vec![T::zero(); c];
    for ch in 0..c {
        let mut s = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            s += x[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let m = s / count as f64;
        let mut ss = 0.0f64;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            ss += x[off..off + plane]
                .iter()
                .map(|v| {
                    let d = v.as_f64() - m;
                    d * d
                })
                .sum::<f64>();
        }
        let v = ss / count as f64;
        mean[ch] = T::from_f64(m);
        var[ch] = T::from_f64(v);
        inv_std[ch] = T::from_f64(1.0 / (v + eps.as_f64()).sqrt());
    }
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    let (gm, bt) = (gamma.data(), beta.data());
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = xh;
                out[i] = gm[ch] * xh + bt[ch];
            }
        }
    }
    check_finite("batch_norm2d", &[x, gm, bt], &out)?;
    Ok((
        Tensor::new(input.shape(), out)?,
        BnBatch {
            xhat,
            inv_std,
            mean,
            var,
            count,
        },
    ))
}

pub(crate) fn bn_train_backward<T: Scalar>(
    shape: &[usize],
    saved: &BnBatch<T>,
    gamma: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (n, c, plane) = (shape[0], shape[1], shape[2] * shape[3]);
    let m = T::from_f64(saved.count as f64);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                dgamma[ch] = dgamma[ch] + grad_out[i] * saved.xhat[i];
                dbeta[ch] = dbeta[ch] + grad_out[i];
            }
        }
    }
    let mut dx = vec![T::zero(); grad_out.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let k = gamma[ch] * saved.inv_std[ch] / m;
            for i in off..off + plane {
                dx[i] = k * (m * grad_out[i] - dbeta[ch] - saved.xhat[i] * dgamma[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub(crate) fn bn_infer_scale<T: Scalar>(running: &RunningStats<T>, eps: T) -> Vec<T> {
    running.var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect()
}

pub(crate) fn bn_infer_forward<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &RunningStats<T>,
    eps: T,
) -> Result<Tensor<T>> {
    let (n, c, plane) = bn_check(input, gamma, beta, eps)?;
    if running.mean.len() != c || running.var.len() != c {
        return Err(TensorError::dim("batch_norm2d", "running stats", c, running.mean.len()));
    }
    let scale = bn_infer_scale(running, eps);
    let x = input.data();
    let (gm, bt) = (gamma.data(), beta.data());
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                out[i] = gm[ch] * (x[i] - running.mean[ch]) * scale[ch] + bt[ch];
            }
        }
    }
    check_finite("batch_norm2d", &[x, gm, bt], &out)?;
    Tensor::new(input.shape(), out)
}

/// Batch normalization over `(N, H, W)` per channel. Training mode normalizes
/// by batch statistics and folds them into `running`; inference mode reads
/// `running` only.
pub fn batch_norm2d<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: BnMode,
    eps: T,
    momentum: T,
) -> Result<Tensor<T>> {
    match mode {
        BnMode::Train => {
            let (out, saved) = bn_train_forward(input, gamma, beta, eps)?;
            running.update(&saved.mean, &saved.var, saved.count, momentum);
            Ok(out)
        }
        BnMode::Infer => bn_infer_forward(input, gamma, beta, running, eps),
    }
}

/// Channel count and per-channel plane size for a tensor whose axis 1 is the
/// channel axis.
pub(crate) fn channel_layout(shape: &[usize]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(TensorError::Rank {
            expected: 2,
            shape: shape.to_vec(),
        });
    }
    Ok((shape[0], shape[1], shape[2..].iter().product()))
}

pub fn prelu<T: Scalar>(input: &Tensor<T>, alpha: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, plane) = channel_layout(input.shape())?;
    if alpha.numel() != c {
        return Err(TensorError::dim("prelu", "alpha", c, alpha.numel()));
    }
    let (x, a) = (input.data(), alpha.data());
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                out[i] = if x[i] >= T::zero() { x[i] } else { a[ch] * x[i] };
            }
        }
    }
    Tensor::new(input.shape(), out)
}

pub fn leaky_relu<T: Scalar>(input: &Tensor<T>, slope: T) -> Tensor<T> {
    input.map(|v| if v >= T::zero() { v } else { slope * v })
}

/// Rearranges `C·r²` channels into an `r×` larger spatial grid:
/// `out[n][c][h][w] = in[n][c·r² + (h mod r)·r + (w mod r)][h / r][w / r]`.
pub fn pixel_shuffle<T: Scalar>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    let (n, c_in, h, w) = input.dims4()?;
    if r == 0 || c_in % (r * r) != 0 {
        return Err(TensorError::invalid(
            "pixel_shuffle",
            format!("{c_in} channels not divisible by r²={}", r * r),
        ));
    }
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let src_c = ch * r * r + (y % r) * r + (xx % r);
                    out[((b * c + ch) * oh + y) * ow + xx] =
                        x[((b * c_in + src_c) * h + y / r) * w + xx / r];
                }
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

/// Inverse permutation of [`pixel_shuffle`].
pub(crate) fn pixel_unshuffle<T: Scalar>(grad: &[T], out_shape: &[usize], r: usize) -> Vec<T> {
    let (n, c, oh, ow) = (out_shape[0], out_shape[1], out_shape[2], out_shape[3]);
    let (h, w, c_in) = (oh / r, ow / r, c * r * r);
    let mut dx = vec![T::zero(); grad.len()];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for xx in 0..ow {
                    let src_c = ch * r * r + (y % r) * r + (xx % r);
                    dx[((b * c_in + src_c) * h + y / r) * w + xx / r] =
                        grad[((b * c + ch) * oh + y) * ow + xx];
                }
            }
        }
    }
    dx
}

/// Affine map `input · weightᵀ + bias` for `input: [N, D]`, `weight: [Dout, D]`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, d) = input.dims2()?;
    let (dout, wd) = weight.dims2()?;
    if wd != d {
        return Err(TensorError::dim("dense", "in_features", d, wd));
    }
    if bias.numel() != dout {
        return Err(TensorError::dim("dense", "bias", dout, bias.numel()));
    }
    let mut out = vec![T::zero(); n * dout];
    T::gemm(
        n,
        d,
        dout,
        T::one(),
        (input.data(), d as isize, 1),
        (weight.data(), 1, d as isize),
        T::zero(),
        (&mut out, dout as isize, 1),
    );
    let b = bias.data();
    for row in out.chunks_mut(dout) {
        row.iter_mut().zip(b).for_each(|(v, &bb)| *v = *v + bb);
    }
    check_finite("dense", &[input.data(), weight.data(), b], &out)?;
    Tensor::new(&[n, dout], out)
}

pub(crate) fn dense_backward<T: Scalar>(
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    (n, d, dout): (usize, usize, usize),
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>, Vec<T>) {
    let dx = want_input.then(|| {
        let mut dx = vec![T::zero(); n * d];
        T::gemm(
            n,
            dout,
            d,
            T::one(),
            (grad_out, dout as isize, 1),
            (weight, d as isize, 1),
            T::zero(),
            (&mut dx, d as isize, 1),
        );
        dx
    });
    let dw = want_weight.then(|| {
        let mut dw = vec![T::zero(); dout * d];
        T::gemm(
            dout,
            n,
            d,
            T::one(),
            (grad_out, 1, dout as isize),
            (input, d as isize, 1),
            T::zero(),
            (&mut dw, d as isize, 1),
        );
        dw
    });
    let mut db = vec![T::zero(); dout];
    for row in grad_out.chunks(dout) {
        db.iter_mut().zip(row).for_each(|(a, &g)| *a = *a + g);
    }
    (dx, dw, db)
}
