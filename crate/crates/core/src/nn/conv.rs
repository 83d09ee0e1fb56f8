//! Convolutions on stacked `[batch·pixels, channels]` maps. The 2×2 stride-2
//! transposed convolution is a matmul followed by a per-image pixel shuffle;
//! the 3×3 convolution goes through an explicit im2col buffer.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::{VarId, VarStore};
use crate::tensor::{matmul, matmul_at, matmul_bt, Tensor};

/// Transposed convolution, kernel 2, stride 2: exact 2× upsampling.
/// Weight layout `[in, 4*out]` with column `(dy*2+dx)*out + o`; the bias is
/// shared per output channel.
#[derive(Debug, Clone)]
pub struct ConvTranspose2x2 {
    pub w: VarId,
    pub b: VarId,
    pub in_channels: usize,
    pub out_channels: usize,
}

pub struct ConvTranspose2x2Ctx<T: Scalar> {
    x: Vec<T>,
    h: usize,
    w: usize,
    batch: usize,
}

impl ConvTranspose2x2 {
    pub fn new<T: Scalar>(
        store: &mut VarStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut w = Tensor::zeros(&[in_channels, 4 * out_channels]);
        for v in w.data_mut() {
            *v = T::from_f64(rng.trunc_normal(0.02));
        }
        let w = store.add(alloc::format!("{name}.weight"), w);
        let b = store.add(alloc::format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        ConvTranspose2x2 { w, b, in_channels, out_channels }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &VarStore<T>,
        x: &[T],
        h: usize,
        w: usize,
        batch: usize,
    ) -> (Vec<T>, ConvTranspose2x2Ctx<T>) {
        debug_assert_eq!(x.len(), batch * h * w * self.in_channels);
        let co = self.out_channels;
        let mut lin = vec![T::ZERO; batch * h * w * 4 * co];
        matmul(batch * h * w, self.in_channels, 4 * co, x, store.value(self.w).data(), &mut lin, false);
        let bias = store.value(self.b).data();
        let ow = 2 * w;
        let mut y = vec![T::ZERO; batch * 4 * h * w * co];
        for b in 0..batch {
            let in_base = b * h * w;
            let out_base = b * 4 * h * w;
            for py in 0..h {
                for px in 0..w {
                    let src = &lin[(in_base + py * w + px) * 4 * co..(in_base + py * w + px + 1) * 4 * co];
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let dst_px = out_base + (2 * py + dy) * ow + (2 * px + dx);
                            let src_block = (dy * 2 + dx) * co;
                            for o in 0..co {
                                y[dst_px * co + o] = src[src_block + o] + bias[o];
                            }
                        }
                    }
                }
            }
        }
        (y, ConvTranspose2x2Ctx { x: x.to_vec(), h, w, batch })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &ConvTranspose2x2Ctx<T>,
        dy: &[T],
    ) -> Vec<T> {
        let (h, w, co) = (ctx.h, ctx.w, self.out_channels);
        let ow = 2 * w;
        debug_assert_eq!(dy.len(), ctx.batch * 4 * h * w * co);
        {
            let gb = store.grad_mut(self.b).data_mut();
            for px_row in dy.chunks_exact(co) {
                for (g, &d) in gb.iter_mut().zip(px_row.iter()) {
                    *g += d;
                }
            }
        }
        // Inverse pixel shuffle back into matmul layout.
        let mut dlin = vec![T::ZERO; ctx.batch * h * w * 4 * co];
        for b in 0..ctx.batch {
            let in_base = b * h * w;
            let out_base = b * 4 * h * w;
            for py in 0..h {
                for px in 0..w {
                    let dst =
                        &mut dlin[(in_base + py * w + px) * 4 * co..(in_base + py * w + px + 1) * 4 * co];
                    for dyy in 0..2 {
                        for dxx in 0..2 {
                            let src_px = out_base + (2 * py + dyy) * ow + (2 * px + dxx);
                            dst[(dyy * 2 + dxx) * co..(dyy * 2 + dxx + 1) * co]
                                .copy_from_slice(&dy[src_px * co..(src_px + 1) * co]);
                        }
                    }
                }
            }
        }
        {
            let (_, gw) = store.value_and_grad_mut(self.w);
            matmul_at(self.in_channels, ctx.batch * h * w, 4 * co, &ctx.x, &dlin, gw.data_mut(), true);
        }
        let mut dx = vec![T::ZERO; ctx.batch * h * w * self.in_channels];
        matmul_bt(ctx.batch * h * w, 4 * co, self.in_channels, &dlin, store.value(self.w).data(), &mut dx, false);
        dx
    }
}

/// 3×3 convolution, stride 1, zero padding 1. Weight layout `[9*in, out]`
/// with row `(ky*3+kx)*in + c`.
#[derive(Debug, Clone)]
pub struct Conv3x3 {
    pub w: VarId,
    pub b: VarId,
    pub in_channels: usize,
    pub out_channels: usize,
}

pub struct Conv3x3Ctx<T: Scalar> {
    cols: Vec<T>,
    h: usize,
    w: usize,
    batch: usize,
}

impl Conv3x3 {
    pub fn new<T: Scalar>(
        store: &mut VarStore<T>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        rng: &mut Rng,
    ) -> Self {
        let mut w = Tensor::zeros(&[9 * in_channels, out_channels]);
        for v in w.data_mut() {
            *v = T::from_f64(rng.trunc_normal(0.02));
        }
        let w = store.add(alloc::format!("{name}.weight"), w);
        let b = store.add(alloc::format!("{name}.bias"), Tensor::zeros(&[out_channels]));
        Conv3x3 { w, b, in_channels, out_channels }
    }

    fn im2col<T: Scalar>(&self, x: &[T], h: usize, w: usize, batch: usize) -> Vec<T> {
        let ci = self.in_channels;
        let mut cols = vec![T::ZERO; batch * h * w * 9 * ci];
        for b in 0..batch {
            let base_px = b * h * w;
            for py in 0..h {
                for px in 0..w {
                    let out_base = (base_px + py * w + px) * 9 * ci;
                    for ky in 0..3usize {
                        let sy = py as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = px as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = (base_px + sy as usize * w + sx as usize) * ci;
                            let dst = out_base + (ky * 3 + kx) * ci;
                            cols[dst..dst + ci].copy_from_slice(&x[src..src + ci]);
                        }
                    }
                }
            }
        }
        cols
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &VarStore<T>,
        x: &[T],
        h: usize,
        w: usize,
        batch: usize,
    ) -> (Vec<T>, Conv3x3Ctx<T>) {
        debug_assert_eq!(x.len(), batch * h * w * self.in_channels);
        let cols = self.im2col(x, h, w, batch);
        let mut y = vec![T::ZERO; batch * h * w * self.out_channels];
        matmul(batch * h * w, 9 * self.in_channels, self.out_channels, &cols, store.value(self.w).data(), &mut y, false);
        let bias = store.value(self.b).data();
        for row in y.chunks_exact_mut(self.out_channels) {
            for (v, &bv) in row.iter_mut().zip(bias.iter()) {
                *v += bv;
            }
        }
        (y, Conv3x3Ctx { cols, h, w, batch })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &Conv3x3Ctx<T>,
        dy: &[T],
    ) -> Vec<T> {
        let (h, w, ci, co) = (ctx.h, ctx.w, self.in_channels, self.out_channels);
        debug_assert_eq!(dy.len(), ctx.batch * h * w * co);
        {
            let gb = store.grad_mut(self.b).data_mut();
            for row in dy.chunks_exact(co) {
                for (g, &d) in gb.iter_mut().zip(row.iter()) {
                    *g += d;
                }
            }
        }
        {
            let (_, gw) = store.value_and_grad_mut(self.w);
            matmul_at(9 * ci, ctx.batch * h * w, co, &ctx.cols, dy, gw.data_mut(), true);
        }
        let mut dcols = vec![T::ZERO; ctx.batch * h * w * 9 * ci];
        matmul_bt(ctx.batch * h * w, co, 9 * ci, dy, store.value(self.w).data(), &mut dcols, false);
        // col2im: scatter-add back to input positions.
        let mut dx = vec![T::ZERO; ctx.batch * h * w * ci];
        for b in 0..ctx.batch {
            let base_px = b * h * w;
            for py in 0..h {
                for px in 0..w {
                    let col_base = (base_px + py * w + px) * 9 * ci;
                    for ky in 0..3usize {
                        let sy = py as isize + ky as isize - 1;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let sx = px as isize + kx as isize - 1;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let dst = (base_px + sy as usize * w + sx as usize) * ci;
                            let src = col_base + (ky * 3 + kx) * ci;
                            for c in 0..ci {
                                dx[dst + c] += dcols[src + c];
                            }
                        }
                    }
                }
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::functional::{mse, mse_backward};

    #[test]
    fn conv_transpose_doubles_resolution() {
        let mut rng = Rng::new(2);
        let mut store = VarStore::<f32>::new();
        let ct = ConvTranspose2x2::new(&mut store, "ct", 3, 2, &mut rng);
        let x = vec![0.5f32; 4 * 4 * 3];
        let (y, _) = ct.forward(&store, &x, 4, 4, 1);
        assert_eq!(y.len(), 8 * 8 * 2);
    }

    #[test]
    fn batched_forward_matches_stacked_singles() {
        let mut rng = Rng::new(7);
        let mut store = VarStore::<f64>::new();
        let ct = ConvTranspose2x2::new(&mut store, "ct", 2, 3, &mut rng);
        let conv = Conv3x3::new(&mut store, "c3", 2, 2, &mut rng);
        let a: Vec<f64> = (0..3 * 2 * 2).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..3 * 2 * 2).map(|_| rng.normal()).collect();
        let mut stacked = a.clone();
        stacked.extend_from_slice(&b);

        let (ya, _) = ct.forward(&store, &a, 3, 2, 1);
        let (yb, _) = ct.forward(&store, &b, 3, 2, 1);
        let (ys, _) = ct.forward(&store, &stacked, 3, 2, 2);
        assert_eq!(ys, [ya, yb].concat());

        let (ca, _) = conv.forward(&store, &a, 3, 2, 1);
        let (cb, _) = conv.forward(&store, &b, 3, 2, 1);
        let (cs, _) = conv.forward(&store, &stacked, 3, 2, 2);
        assert_eq!(cs, [ca, cb].concat());
    }

    #[test]
    fn conv_transpose_gradients_match_finite_differences() {
        let mut rng = Rng::new(3);
        let mut store = VarStore::<f64>::new();
        let ct = ConvTranspose2x2::new(&mut store, "ct", 2, 3, &mut rng);
        let x: Vec<f64> = (0..2 * 3 * 2 * 2).map(|_| rng.normal()).collect();
        let target: Vec<f64> = (0..2 * 6 * 4 * 3).map(|_| rng.normal()).collect();
        let loss_fn = |store: &VarStore<f64>, x: &[f64]| {
            let (y, _) = ct.forward(store, x, 3, 2, 2);
            mse(&y, &target)
        };
        let (y, ctx) = ct.forward(&store, &x, 3, 2, 2);
        let dy = mse_backward(&y, &target);
        let dx = ct.backward(&mut store, &ctx, &dy);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss_fn(&store, &xp) - loss_fn(&store, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7);
        }
        for id in [ct.w, ct.b] {
            for i in 0..store.value(id).numel() {
                let orig = store.value(id).data()[i];
                store.value_mut(id).data_mut()[i] = orig + h;
                let fp = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig - h;
                let fm = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let g = store.grad(id).data()[i];
                assert!((fd - g).abs() < 1e-7, "analytic {g} vs fd {fd}");
            }
        }
    }

    #[test]
    fn conv3x3_constant_input_gives_constant_interior() {
        let mut rng = Rng::new(5);
        let mut store = VarStore::<f64>::new();
        let conv = Conv3x3::new(&mut store, "c", 2, 2, &mut rng);
        let x = vec![0.3f64; 5 * 5 * 2];
        let (y, _) = conv.forward(&store, &x, 5, 5, 1);
        // Interior pixels see identical 3x3 neighborhoods.
        let center = &y[(2 * 5 + 2) * 2..(2 * 5 + 2) * 2 + 2];
        let other = &y[(5 + 3) * 2..(5 + 3) * 2 + 2];
        assert!((center[0] - other[0]).abs() < 1e-12);
        assert!((center[1] - other[1]).abs() < 1e-12);
    }

    #[test]
    fn conv3x3_gradients_match_finite_differences() {
        let mut rng = Rng::new(6);
        let mut store = VarStore::<f64>::new();
        let conv = Conv3x3::new(&mut store, "c", 2, 2, &mut rng);
        let x: Vec<f64> = (0..2 * 4 * 3 * 2).map(|_| rng.normal()).collect();
        let target: Vec<f64> = (0..2 * 4 * 3 * 2).map(|_| rng.normal()).collect();
        let loss_fn = |store: &VarStore<f64>, x: &[f64]| {
            let (y, _) = conv.forward(store, x, 4, 3, 2);
            mse(&y, &target)
        };
        let (y, ctx) = conv.forward(&store, &x, 4, 3, 2);
        let dy = mse_backward(&y, &target);
        let dx = conv.backward(&mut store, &ctx, &dy);
        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss_fn(&store, &xp) - loss_fn(&store, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7, "dx[{i}]");
        }
        for id in [conv.w, conv.b] {
            for i in 0..store.value(id).numel() {
                let orig = store.value(id).data()[i];
                store.value_mut(id).data_mut()[i] = orig + h;
                let fp = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig - h;
                let fm = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let g = store.grad(id).data()[i];
                assert!((fd - g).abs() < 1e-7);
            }
        }
    }
}
