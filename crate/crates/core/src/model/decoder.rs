//! Upsampling decoder head: two 2× transposed-convolution stages with
//! channel normalization and GELU, an extra 3×3 convolution, a 1×1 class
//! projection, and bilinear upsampling to the input resolution.

use alloc::vec::Vec;

use crate::error::Error;
use crate::nn::{
    bilinear_resize, bilinear_resize_backward, gelu, gelu_backward, Conv3x3, Conv3x3Ctx,
    ConvTranspose2x2, ConvTranspose2x2Ctx, LayerNorm, LayerNormCtx, Linear, LinearCtx,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::VarStore;
use crate::Result;

use super::TokenGrid;

#[derive(Debug, Clone)]
pub struct Decoder {
    pub dim: usize,
    pub num_classes: usize,
    up1: ConvTranspose2x2,
    norm1: LayerNorm,
    up2: ConvTranspose2x2,
    norm2: LayerNorm,
    conv: Conv3x3,
    proj: Linear,
}

pub struct DecodeCtx<T: Scalar> {
    grid: (usize, usize),
    out_hw: (usize, usize),
    batch: usize,
    up1: ConvTranspose2x2Ctx<T>,
    n1: LayerNormCtx<T>,
    g1_in: Vec<T>,
    up2: ConvTranspose2x2Ctx<T>,
    n2: LayerNormCtx<T>,
    g2_in: Vec<T>,
    conv: Conv3x3Ctx<T>,
    g3_in: Vec<T>,
    proj: LinearCtx<T>,
}

impl Decoder {
    pub fn new<T: Scalar>(
        store: &mut VarStore<T>,
        dim: usize,
        num_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(alloc::format!(
                "decoder needs at least 2 classes, got {num_classes}"
            )));
        }
        if dim % 4 != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "decoder needs dim divisible by 4, got {dim}"
            )));
        }
        let half = dim / 2;
        let quarter = dim / 4;
        Ok(Decoder {
            dim,
            num_classes,
            up1: ConvTranspose2x2::new(store, "dec.up1", dim, half, rng),
            norm1: LayerNorm::new(store, "dec.norm1", half, rng),
            up2: ConvTranspose2x2::new(store, "dec.up2", half, quarter, rng),
            norm2: LayerNorm::new(store, "dec.norm2", quarter, rng),
            conv: Conv3x3::new(store, "dec.conv", quarter, quarter, rng),
            proj: Linear::new(store, "dec.proj", quarter, num_classes, true, rng),
        })
    }

    /// Logits at full image resolution for a stacked batch of token maps:
    /// `[batch·H·W, C]` rows in scan order.
    pub fn decode_batch<T: Scalar>(
        &self,
        store: &VarStore<T>,
        tokens: &[T],
        grid: (usize, usize),
        patch_size: usize,
        batch: usize,
    ) -> Result<(Vec<T>, DecodeCtx<T>)> {
        let (gh, gw) = grid;
        if tokens.len() != batch * gh * gw * self.dim {
            return Err(Error::ShapeMismatch {
                context: "Decoder::decode",
                expected: alloc::format!("{} values", batch * gh * gw * self.dim),
                got: alloc::format!("{}", tokens.len()),
            });
        }
        let (h1, w1) = (2 * gh, 2 * gw);
        let (h2, w2) = (4 * gh, 4 * gw);
        let out_hw = (gh * patch_size, gw * patch_size);

        let (u1, up1_ctx) = self.up1.forward(store, tokens, gh, gw, batch);
        let (n1, n1_ctx) = self.norm1.forward(store, &u1, batch * h1 * w1);
        let a1 = gelu(&n1);
        let (u2, up2_ctx) = self.up2.forward(store, &a1, h1, w1, batch);
        let (n2, n2_ctx) = self.norm2.forward(store, &u2, batch * h2 * w2);
        let a2 = gelu(&n2);
        let (c3, conv_ctx) = self.conv.forward(store, &a2, h2, w2, batch);
        let a3 = gelu(&c3);
        let (logits_low, proj_ctx) = self.proj.forward(store, &a3, batch * h2 * w2);

        let c = self.num_classes;
        let mut logits = Vec::with_capacity(batch * out_hw.0 * out_hw.1 * c);
        for b in 0..batch {
            let low = &logits_low[b * h2 * w2 * c..(b + 1) * h2 * w2 * c];
            logits.extend_from_slice(&bilinear_resize(low, h2, w2, c, out_hw.0, out_hw.1));
        }
        Ok((
            logits,
            DecodeCtx {
                grid,
                out_hw,
                batch,
                up1: up1_ctx,
                n1: n1_ctx,
                g1_in: n1,
                up2: up2_ctx,
                n2: n2_ctx,
                g2_in: n2,
                conv: conv_ctx,
                g3_in: c3,
                proj: proj_ctx,
            },
        ))
    }

    /// Single-image decode.
    pub fn decode<T: Scalar>(
        &self,
        store: &VarStore<T>,
        tokens: &TokenGrid<T>,
    ) -> Result<(Vec<T>, DecodeCtx<T>)> {
        if tokens.dim != self.dim {
            return Err(Error::ShapeMismatch {
                context: "Decoder::decode",
                expected: alloc::format!("token dim {}", self.dim),
                got: alloc::format!("{}", tokens.dim),
            });
        }
        self.decode_batch(store, &tokens.tokens, tokens.grid, tokens.patch_size, 1)
    }

    /// Gradient with respect to the input tokens.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &DecodeCtx<T>,
        dlogits: &[T],
    ) -> Vec<T> {
        let (gh, gw) = ctx.grid;
        let (h2, w2) = (4 * gh, 4 * gw);
        let c = self.num_classes;
        let mut dlow = Vec::with_capacity(ctx.batch * h2 * w2 * c);
        for b in 0..ctx.batch {
            let dy = &dlogits[b * ctx.out_hw.0 * ctx.out_hw.1 * c..(b + 1) * ctx.out_hw.0 * ctx.out_hw.1 * c];
            dlow.extend_from_slice(&bilinear_resize_backward(dy, h2, w2, c, ctx.out_hw.0, ctx.out_hw.1));
        }
        let da3 = self.proj.backward(store, &ctx.proj, &dlow);
        let dc3 = gelu_backward(&ctx.g3_in, &da3);
        let da2 = self.conv.backward(store, &ctx.conv, &dc3);
        let dn2 = gelu_backward(&ctx.g2_in, &da2);
        let du2 = self.norm2.backward(store, &ctx.n2, &dn2);
        let da1 = self.up2.backward(store, &ctx.up2, &du2);
        let dn1 = gelu_backward(&ctx.g1_in, &da1);
        let du1 = self.norm1.backward(store, &ctx.n1, &dn1);
        self.up1.backward(store, &ctx.up1, &du1)
    }
}
