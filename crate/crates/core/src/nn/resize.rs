//! Bilinear resizing of `[pixels, channels]` maps, with the exact transpose
//! as the backward pass. Half-pixel centers (align_corners = false).

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

/// For one output coordinate, the two source indices and the weight of the
/// second one.
#[inline]
fn sample_axis(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = (dst as f64 + 0.5) * scale - 0.5;
    let pos = pos.max(0.0);
    let i0 = libm::floor(pos) as usize;
    let i0 = i0.min(src_len - 1);
    let i1 = (i0 + 1).min(src_len - 1);
    let frac = pos - i0 as f64;
    let frac = if frac > 1.0 { 1.0 } else { frac };
    (i0, i1, frac)
}

pub fn bilinear_resize<T: Scalar>(
    src: &[T],
    sh: usize,
    sw: usize,
    channels: usize,
    dh: usize,
    dw: usize,
) -> Vec<T> {
    debug_assert_eq!(src.len(), sh * sw * channels);
    if sh == dh && sw == dw {
        return src.to_vec();
    }
    let mut out = vec![T::ZERO; dh * dw * channels];
    for oy in 0..dh {
        let (y0, y1, fy) = sample_axis(oy, sh, dh);
        for ox in 0..dw {
            let (x0, x1, fx) = sample_axis(ox, sw, dw);
            let w00 = T::from_f64((1.0 - fy) * (1.0 - fx));
            let w01 = T::from_f64((1.0 - fy) * fx);
            let w10 = T::from_f64(fy * (1.0 - fx));
            let w11 = T::from_f64(fy * fx);
            let p00 = (y0 * sw + x0) * channels;
            let p01 = (y0 * sw + x1) * channels;
            let p10 = (y1 * sw + x0) * channels;
            let p11 = (y1 * sw + x1) * channels;
            let dst = (oy * dw + ox) * channels;
            for c in 0..channels {
                out[dst + c] = src[p00 + c] * w00
                    + src[p01 + c] * w01
                    + src[p10 + c] * w10
                    + src[p11 + c] * w11;
            }
        }
    }
    out
}

/// Transpose of `bilinear_resize`: scatter output gradients back onto the
/// source grid with the same interpolation weights.
pub fn bilinear_resize_backward<T: Scalar>(
    dy: &[T],
    sh: usize,
    sw: usize,
    channels: usize,
    dh: usize,
    dw: usize,
) -> Vec<T> {
    debug_assert_eq!(dy.len(), dh * dw * channels);
    if sh == dh && sw == dw {
        return dy.to_vec();
    }
    let mut dx = vec![T::ZERO; sh * sw * channels];
    for oy in 0..dh {
        let (y0, y1, fy) = sample_axis(oy, sh, dh);
        for ox in 0..dw {
            let (x0, x1, fx) = sample_axis(ox, sw, dw);
            let w00 = T::from_f64((1.0 - fy) * (1.0 - fx));
            let w01 = T::from_f64((1.0 - fy) * fx);
            let w10 = T::from_f64(fy * (1.0 - fx));
            let w11 = T::from_f64(fy * fx);
            let p00 = (y0 * sw + x0) * channels;
            let p01 = (y0 * sw + x1) * channels;
            let p10 = (y1 * sw + x0) * channels;
            let p11 = (y1 * sw + x1) * channels;
            let src = (oy * dw + ox) * channels;
            for c in 0..channels {
                let g = dy[src + c];
                dx[p00 + c] += g * w00;
                dx[p01 + c] += g * w01;
                dx[p10 + c] += g * w10;
                dx[p11 + c] += g * w11;
            }
        }
    }
    dx
}
