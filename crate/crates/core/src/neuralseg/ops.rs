//! Convolution kernels over flat `C × H × W` buffers.
//!
//! A convolution relation with weights `W[o][i][ky][kx]`, stride `s` and
//! padding `p` ties `y[o][Y][X]` to `x[i][Y·s + ky − p][X·s + kx − p]`.
//! `gather` computes `y` from `x`, `scatter` pushes `y` back onto `x` (the
//! transposed direction), and `weight_grad` correlates the two.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    /// Channels on the `y` side.
    pub y_channels: usize,
    /// Channels on the `x` side.
    pub x_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub x_size: (usize, usize),
    pub y_size: (usize, usize),
}

impl Geometry {
    /// Output size of a convolution over `input` (`x` side).
    pub fn conv_out(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        (input + 2 * pad)
            .checked_sub(kernel)
            .map(|v| v / stride + 1)
    }

    /// Output size of a transposed convolution over `input` (`y` side).
    pub fn deconv_out(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        ((input - 1) * stride + kernel).checked_sub(2 * pad)
    }

    /// `X` range whose tap `k` lands inside `[0, len)`.
    #[inline]
    fn span(&self, k: usize, y_len: usize, x_len: usize) -> (usize, usize) {
        let (s, p) = (self.stride as isize, self.pad as isize);
        let off = k as isize - p;
        // X·s + off >= 0  and  X·s + off <= x_len − 1
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi = (x_len as isize - 1 - off).div_euclid(s) + 1;
        let hi = hi.clamp(0, y_len as isize) as usize;
        (lo as usize, hi.max(lo as usize))
    }
}

/// `y += W ⋆ x`.
pub fn gather(g: &Geometry, w: &[f64], x: &[f64], y: &mut [f64]) {
    let (xh, xw) = g.x_size;
    let (yh, yw) = g.y_size;
    let k = g.kernel;
    let s = g.stride;
    for o in 0..g.y_channels {
        let yo = &mut y[o * yh * yw..(o + 1) * yh * yw];
        for i in 0..g.x_channels {
            let xi = &x[i * xh * xw..(i + 1) * xh * xw];
            for ky in 0..k {
                let (r0, r1) = g.span(ky, yh, xh);
                for kx in 0..k {
                    let wv = w[((o * g.x_channels + i) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (c0, c1) = g.span(kx, yw, xw);
                    for r in r0..r1 {
                        let xr = &xi[(r * s + ky - g.pad) * xw..];
                        let yr = &mut yo[r * yw..(r + 1) * yw];
                        if s == 1 {
                            let base = c0 + kx - g.pad;
                            for (yv, xv) in yr[c0..c1].iter_mut().zip(&xr[base..base + (c1 - c0)]) {
                                *yv += wv * xv;
                            }
                        } else {
                            for c in c0..c1 {
                                yr[c] += wv * xr[c * s + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `x += Wᵀ ⋆ y`.
pub fn scatter(g: &Geometry, w: &[f64], y: &[f64], x: &mut [f64]) {
    let (xh, xw) = g.x_size;
    let (yh, yw) = g.y_size;
    let k = g.kernel;
    let s = g.stride;
    for o in 0..g.y_channels {
        let yo = &y[o * yh * yw..(o + 1) * yh * yw];
        for i in 0..g.x_channels {
            let xi = &mut x[i * xh * xw..(i + 1) * xh * xw];
            for ky in 0..k {
                let (r0, r1) = g.span(ky, yh, xh);
                for kx in 0..k {
                    let wv = w[((o * g.x_channels + i) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (c0, c1) = g.span(kx, yw, xw);
                    for r in r0..r1 {
                        let yr = &yo[r * yw..(r + 1) * yw];
                        let xr = &mut xi[(r * s + ky - g.pad) * xw..(r * s + ky - g.pad + 1) * xw];
                        if s == 1 {
                            let base = c0 + kx - g.pad;
                            for (xv, yv) in xr[base..base + (c1 - c0)].iter_mut().zip(&yr[c0..c1]) {
                                *xv += wv * yv;
                            }
                        } else {
                            for c in c0..c1 {
                                xr[c * s + kx - g.pad] += wv * yr[c];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `dW += y ⋆ x` (the correlation of the two sides for every tap).
pub fn weight_grad(g: &Geometry, x: &[f64], y: &[f64], dw: &mut [f64]) {
    let (xh, xw) = g.x_size;
    let (yh, yw) = g.y_size;
    let k = g.kernel;
    let s = g.stride;
    for o in 0..g.y_channels {
        let yo = &y[o * yh * yw..(o + 1) * yh * yw];
        if yo.iter().all(|v| *v == 0.0) {
            continue;
        }
        for i in 0..g.x_channels {
            let xi = &x[i * xh * xw..(i + 1) * xh * xw];
            for ky in 0..k {
                let (r0, r1) = g.span(ky, yh, xh);
                for kx in 0..k {
                    let (c0, c1) = g.span(kx, yw, xw);
                    let mut acc = [0.0f64; 4];
                    let mut tail = 0.0;
                    for r in r0..r1 {
                        let yr = &yo[r * yw + c0..r * yw + c1];
                        let xr = &xi[(r * s + ky - g.pad) * xw..];
                        if s == 1 {
                            let base = c0 + kx - g.pad;
                            let xs = &xr[base..base + (c1 - c0)];
                            let (ya, xa) = (yr.chunks_exact(4), xs.chunks_exact(4));
                            tail += ya
                                .remainder()
                                .iter()
                                .zip(xa.remainder())
                                .map(|(a, b)| a * b)
                                .sum::<f64>();
                            for (a, b) in ya.zip(xa) {
                                for j in 0..4 {
                                    acc[j] += a[j] * b[j];
                                }
                            }
                        } else {
                            for (j, c) in (c0..c1).enumerate() {
                                tail += yr[j] * xr[c * s + kx - g.pad];
                            }
                        }
                    }
                    dw[((o * g.x_channels + i) * k + ky) * k + kx] +=
                        acc.iter().sum::<f64>() + tail;
                }
            }
        }
    }
}

/// 2×2 stride-2 max pooling; `switches[j]` is the flat input index of output `j`.
/// Ties keep the first element in row-major window order.
pub fn max_pool(
    x: &[f64],
    c: usize,
    h: usize,
    w: usize,
    out: &mut Vec<f64>,
    switches: &mut Vec<u32>,
) {
    let (oh, ow) = (h / 2, w / 2);
    out.clear();
    switches.clear();
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                switches.push(best as u32);
            }
        }
    }
}

/// Places each input value at its recorded switch in a zeroed `len` buffer.
pub fn unpool(x: &[f64], switches: &[u32], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (v, &s) in x.iter().zip(switches) {
        out[s as usize] = *v;
    }
    out
}

/// Bilinear interpolation kernel of size `k` (the standard FCN upsampling filter).
pub fn bilinear_kernel(k: usize) -> Vec<f64> {
    let factor = k.div_ceil(2) as f64;
    let center = if k % 2 == 1 {
        factor - 1.0
    } else {
        factor - 0.5
    };
    let mut out = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            let wy = 1.0 - (y as f64 - center).abs() / factor;
            let wx = 1.0 - (x as f64 - center).abs() / factor;
            out.push(wy * wx);
        }
    }
    out
}
