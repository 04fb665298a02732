//! Forward kernels and their vector–Jacobian products.

use super::tensor::Tensor4;
use crate::error::{Error, Result};

/// Coefficient of the cubic convolution kernel.
pub const CUBIC_A: f64 = -0.75;

pub const KERNEL: usize = 3;
const KK: usize = KERNEL * KERNEL;

/// Number of parameters of a 3×3 conv layer including its bias.
pub fn conv_param_count(out_ch: usize, in_ch: usize) -> usize {
    out_ch * in_ch * KK + out_ch
}

fn check_conv(input: &Tensor4, weights: &[f64], bias: &[f64], out_ch: usize) -> Result<()> {
    let in_ch = input.channels();
    if weights.len() != out_ch * in_ch * KK {
        return Err(Error::Shape(format!(
            "conv kernel ({out_ch}, {in_ch}, 3, 3) needs {} weights, got {} (input channels = {in_ch})",
            out_ch * in_ch * KK,
            weights.len()
        )));
    }
    if bias.len() != out_ch {
        return Err(Error::Shape(format!(
            "conv bias length {} does not match out_ch = {out_ch}",
            bias.len()
        )));
    }
    Ok(())
}

/// Valid output range along one axis for kernel offset `k` (0..3) with
/// zero padding 1: positions `p` where `p + k - 1` is in `[0, len)`.
#[inline]
fn valid_range(len: usize, k: usize) -> (usize, usize) {
    match k {
        0 => (1, len),
        1 => (0, len),
        _ => (0, len - 1),
    }
}

/// `out += k ⋆ src` for one plane: 3×3 cross-correlation, zero padding 1.
fn correlate_plane(out: &mut [f64], src: &[f64], k: &[f64], h: usize, w: usize) {
    for y in 0..h {
        let o = &mut out[y * w..(y + 1) * w];
        for ky in 0..KERNEL {
            let sy = y + ky;
            if sy == 0 || sy > h {
                continue;
            }
            let s = &src[(sy - 1) * w..sy * w];
            let (k0, k1, k2) = (k[ky * KERNEL], k[ky * KERNEL + 1], k[ky * KERNEL + 2]);
            if w == 1 {
                o[0] += k1 * s[0];
                continue;
            }
            let (left, right) = (&s[..w - 2], &s[2..]);
            let mid = &s[1..w - 1];
            for (((ov, a), b), c) in o[1..w - 1].iter_mut().zip(left).zip(mid).zip(right) {
                *ov += k0 * a + k1 * b + k2 * c;
            }
            o[0] += k1 * s[0] + k2 * s[1];
            o[w - 1] += k0 * s[w - 2] + k1 * s[w - 1];
        }
    }
}

#[inline]
fn shifted_dot(a: &[f64], src: &[f64], h: usize, wd: usize, ky: usize, kx: usize) -> f64 {
    let (y0, y1) = valid_range(h, ky);
    let (x0, x1) = valid_range(wd, kx);
    let mut acc = 0.0;
    for y in y0..y1 {
        let sy = y + ky - 1;
        let o = &a[y * wd + x0..y * wd + x1];
        let s = &src[sy * wd + x0 + kx - 1..sy * wd + x1 + kx - 1];
        acc += o.iter().zip(s).map(|(p, q)| p * q).sum::<f64>();
    }
    acc
}

/// 3×3 cross-correlation, stride 1, zero padding 1. Weights are laid out
/// `(out_ch, in_ch, 3, 3)` row-major.
pub fn conv2d(input: &Tensor4, weights: &[f64], bias: &[f64], out_ch: usize) -> Result<Tensor4> {
    check_conv(input, weights, bias, out_ch)?;
    let [nb, in_ch, h, w] = input.shape();
    let mut out = Tensor4::zeros([nb, out_ch, h, w]);
    for b in 0..nb {
        for oc in 0..out_ch {
            let plane = out.plane_mut(b, oc);
            plane.iter_mut().for_each(|v| *v = bias[oc]);
            for ic in 0..in_ch {
                let src = input.plane(b, ic);
                let kernel = &weights[(oc * in_ch + ic) * KK..(oc * in_ch + ic + 1) * KK];
                if kernel.iter().any(|&v| v != 0.0) {
                    correlate_plane(plane, src, kernel, h, w);
                }
            }
        }
    }
    Ok(out)
}

/// Gradient of [`conv2d`] with respect to its input.
pub fn conv2d_backward_input(grad_out: &Tensor4, weights: &[f64], in_ch: usize) -> Tensor4 {
    let [nb, out_ch, h, w] = grad_out.shape();
    let mut grad_in = Tensor4::zeros([nb, in_ch, h, w]);
    for b in 0..nb {
        for ic in 0..in_ch {
            let dst = grad_in.plane_mut(b, ic);
            for oc in 0..out_ch {
                let g = grad_out.plane(b, oc);
                let kernel = &weights[(oc * in_ch + ic) * KK..(oc * in_ch + ic + 1) * KK];
                if kernel.iter().any(|&v| v != 0.0) {
                    // the adjoint of a zero-padded correlation is a correlation
                    // with the kernel rotated by 180°
                    let mut flipped = [0.0; KK];
                    for (f, v) in flipped.iter_mut().zip(kernel.iter().rev()) {
                        *f = *v;
                    }
                    correlate_plane(dst, g, &flipped, h, w);
                }
            }
        }
    }
    grad_in
}

/// Accumulates the weight and bias gradients of [`conv2d`].
pub fn conv2d_backward_params(input: &Tensor4, grad_out: &Tensor4, grad_w: &mut [f64], grad_b: &mut [f64]) {
    let [nb, in_ch, h, w] = input.shape();
    let out_ch = grad_out.channels();
    for b in 0..nb {
        for oc in 0..out_ch {
            let g = grad_out.plane(b, oc);
            grad_b[oc] += g.iter().sum::<f64>();
            for ic in 0..in_ch {
                let src = input.plane(b, ic);
                let gk = &mut grad_w[(oc * in_ch + ic) * KK..(oc * in_ch + ic + 1) * KK];
                for ky in 0..KERNEL {
                    for kx in 0..KERNEL {
                        gk[ky * KERNEL + kx] += shifted_dot(g, src, h, w, ky, kx);
                    }
                }
            }
        }
    }
}

pub fn relu(input: &Tensor4) -> Tensor4 {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor4::new(input.shape(), data).expect("same shape")
}

/// Passes gradient only where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor4, grad_out: &Tensor4) -> Tensor4 {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor4::new(input.shape(), data).expect("same shape")
}

/// 2×2 max pooling, stride 2. Returns the pooled tensor and, per output,
/// the flat input index of the winning entry (first maximum in row-major
/// window order).
pub fn maxpool2_with_argmax(input: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
    let [nb, ch, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "max pooling needs even height and width, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor4::zeros([nb, ch, oh, ow]);
    let mut argmax = Vec::with_capacity(out.len());
    let data = input.data();
    let mut k = 0;
    for bc in 0..nb * ch {
        let base = bc * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if data[idx] > data[best] {
                        best = idx;
                    }
                }
                out.data_mut()[k] = data[best];
                argmax.push(best);
                k += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2(input: &Tensor4) -> Result<Tensor4> {
    maxpool2_with_argmax(input).map(|(out, _)| out)
}

pub fn maxpool2_backward(in_shape: [usize; 4], argmax: &[usize], grad_out: &Tensor4) -> Tensor4 {
    let mut grad_in = Tensor4::zeros(in_shape);
    for (&idx, &g) in argmax.iter().zip(grad_out.data()) {
        grad_in.data_mut()[idx] += g;
    }
    grad_in
}

/// Cubic convolution kernel with coefficient [`CUBIC_A`].
pub fn cubic_weight(t: f64) -> f64 {
    let a = CUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// One-dimensional corner-aligned bicubic resampling operator as four
/// clamped taps per output sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Resampler1d {
    in_len: usize,
    taps: Vec<[(usize, f64); 4]>,
}

impl Resampler1d {
    pub fn new(in_len: usize, out_len: usize) -> Self {
        let scale = if out_len > 1 {
            (in_len - 1) as f64 / (out_len - 1) as f64
        } else {
            0.0
        };
        let last = in_len as isize - 1;
        let taps = (0..out_len)
            .map(|o| {
                let src = if out_len > 1 && o == out_len - 1 {
                    last as f64
                } else {
                    o as f64 * scale
                };
                let base = src.floor();
                let t = src - base;
                let base = base as isize;
                let w = [
                    cubic_weight(1.0 + t),
                    cubic_weight(t),
                    cubic_weight(1.0 - t),
                    cubic_weight(2.0 - t),
                ];
                let mut taps = [(0usize, 0.0); 4];
                for (k, tap) in taps.iter_mut().enumerate() {
                    let idx = (base - 1 + k as isize).clamp(0, last) as usize;
                    *tap = (idx, w[k]);
                }
                taps
            })
            .collect();
        Self { in_len, taps }
    }

    pub fn in_len(&self) -> usize {
        self.in_len
    }

    pub fn out_len(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self) -> &[[(usize, f64); 4]] {
        &self.taps
    }
}

/// Separable resampling of every `(b, c)` plane: rows first, then columns.
fn resample_planes(input: &Tensor4, rows: &Resampler1d, cols: &Resampler1d) -> Tensor4 {
    let [nb, ch, h, w] = input.shape();
    let (oh, ow) = (rows.out_len(), cols.out_len());
    let mut out = Tensor4::zeros([nb, ch, oh, ow]);
    let mut tmp = vec![0.0; h * ow];
    for b in 0..nb {
        for c in 0..ch {
            let src = input.plane(b, c);
            for y in 0..h {
                for (x, taps) in cols.taps().iter().enumerate() {
                    tmp[y * ow + x] = taps.iter().map(|&(i, wt)| wt * src[y * w + i]).sum();
                }
            }
            let dst = out.plane_mut(b, c);
            for (y, taps) in rows.taps().iter().enumerate() {
                for &(i, wt) in taps {
                    let s = &tmp[i * ow..(i + 1) * ow];
                    for (d, v) in dst[y * ow..(y + 1) * ow].iter_mut().zip(s) {
                        *d += wt * v;
                    }
                }
            }
        }
    }
    out
}

/// Exact transpose of [`resample_planes`].
fn resample_planes_transpose(grad_out: &Tensor4, rows: &Resampler1d, cols: &Resampler1d) -> Tensor4 {
    let [nb, ch, _, ow] = grad_out.shape();
    let (h, w) = (rows.in_len(), cols.in_len());
    let mut grad_in = Tensor4::zeros([nb, ch, h, w]);
    let mut tmp = vec![0.0; h * ow];
    for b in 0..nb {
        for c in 0..ch {
            let g = grad_out.plane(b, c);
            tmp.iter_mut().for_each(|v| *v = 0.0);
            for (y, taps) in rows.taps().iter().enumerate() {
                for &(i, wt) in taps {
                    let d = &mut tmp[i * ow..(i + 1) * ow];
                    for (dv, gv) in d.iter_mut().zip(&g[y * ow..(y + 1) * ow]) {
                        *dv += wt * gv;
                    }
                }
            }
            let dst = grad_in.plane_mut(b, c);
            for y in 0..h {
                for (x, taps) in cols.taps().iter().enumerate() {
                    let gv = tmp[y * ow + x];
                    for &(i, wt) in taps {
                        dst[y * w + i] += wt * gv;
                    }
                }
            }
        }
    }
    grad_in
}

fn check_resample_dims(out_h: usize, out_w: usize) -> Result<()> {
    if out_h < 2 || out_w < 2 {
        return Err(Error::Shape(format!(
            "bicubic output must be at least 2x2, got {out_h}x{out_w}"
        )));
    }
    Ok(())
}

/// Corner-aligned bicubic resampling to `out_h × out_w`.
pub fn bicubic_resample(input: &Tensor4, out_h: usize, out_w: usize) -> Result<Tensor4> {
    check_resample_dims(out_h, out_w)?;
    if input.height() < 2 || input.width() < 2 {
        return Err(Error::Shape("bicubic input must be at least 2x2".into()));
    }
    let rows = Resampler1d::new(input.height(), out_h);
    let cols = Resampler1d::new(input.width(), out_w);
    Ok(resample_planes(input, &rows, &cols))
}

/// Applies the transpose of `bicubic_resample(·, out_h, out_w)` from an
/// `in_h × in_w` input to `grad_out`.
pub fn bicubic_resample_transpose(grad_out: &Tensor4, in_h: usize, in_w: usize) -> Result<Tensor4> {
    check_resample_dims(grad_out.height(), grad_out.width())?;
    let rows = Resampler1d::new(in_h, grad_out.height());
    let cols = Resampler1d::new(in_w, grad_out.width());
    Ok(resample_planes_transpose(grad_out, &rows, &cols))
}
