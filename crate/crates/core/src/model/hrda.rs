//! Multi-resolution fusion: a low-resolution full-context prediction and a
//! high-resolution crop prediction blended by a learned scale-attention map.
//! Kept as an ablatable option; it costs extra forward passes per image.

use alloc::vec::Vec;

use crate::error::Error;
use crate::nn::{bilinear_resize, bilinear_resize_backward, sigmoid, Linear, LinearCtx};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::VarStore;
use crate::Result;

use super::TokenGrid;

/// 1×1 head producing one scale-attention logit per token of the
/// low-resolution pass.
#[derive(Debug, Clone)]
pub struct ScaleAttention {
    pub head: Linear,
}

impl ScaleAttention {
    pub fn new<T: Scalar>(store: &mut VarStore<T>, dim: usize, rng: &mut Rng) -> Self {
        ScaleAttention { head: Linear::new(store, "attn.head", dim, 1, true, rng) }
    }

    /// Per-pixel attention logits at the low-resolution image size.
    pub fn forward<T: Scalar>(
        &self,
        store: &VarStore<T>,
        tokens: &TokenGrid<T>,
    ) -> (Vec<T>, LinearCtx<T>) {
        let (gh, gw) = tokens.grid;
        let (logits, ctx) = self.head.forward(store, &tokens.tokens, gh * gw);
        let up = bilinear_resize(&logits, gh, gw, 1, gh * tokens.patch_size, gw * tokens.patch_size);
        (up, ctx)
    }

    /// Returns the gradient on the tokens.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &LinearCtx<T>,
        grid: (usize, usize),
        patch_size: usize,
        dup: &[T],
    ) -> Vec<T> {
        let dlogits =
            bilinear_resize_backward(dup, grid.0, grid.1, 1, grid.0 * patch_size, grid.1 * patch_size);
        self.head.backward(store, ctx, &dlogits)
    }
}

/// Placement of the high-resolution crop inside the fused output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub y0: usize,
    pub x0: usize,
    pub height: usize,
    pub width: usize,
}

impl CropBox {
    pub fn validate(&self, patch_size: usize, fused_h: usize, fused_w: usize) -> Result<()> {
        let aligned = self.y0 % patch_size == 0
            && self.x0 % patch_size == 0
            && self.height % patch_size == 0
            && self.width % patch_size == 0;
        if !aligned {
            return Err(Error::InvalidConfig(alloc::format!(
                "crop box ({},{} {}x{}) not aligned to the {}-pixel patch grid",
                self.y0, self.x0, self.height, self.width, patch_size
            )));
        }
        if self.y0 + self.height > fused_h || self.x0 + self.width > fused_w {
            return Err(Error::InvalidConfig(alloc::format!(
                "crop box ({},{} {}x{}) exceeds the {}x{} output",
                self.y0, self.x0, self.height, self.width, fused_h, fused_w
            )));
        }
        Ok(())
    }
}

pub struct FuseCtx<T: Scalar> {
    lr_size: (usize, usize),
    out_size: (usize, usize),
    crop: CropBox,
    /// Upsampled LR logits inside the crop box.
    up_lr_in_box: Vec<T>,
    /// Sigmoid attention inside the crop box.
    a_in_box: Vec<T>,
    /// Upsampled attention logits inside the crop box (pre-sigmoid).
    hr: Vec<T>,
    num_classes: usize,
}

/// Blend an upsampled low-resolution prediction with a high-resolution crop
/// prediction: fused = (1-a)·LR + a·HR inside the box, LR elsewhere.
#[allow(clippy::too_many_arguments)]
pub fn hrda_fuse<T: Scalar>(
    lr_logits: &[T],
    lr_size: (usize, usize),
    attn_logits: &[T],
    hr_logits: &[T],
    crop: CropBox,
    out_size: (usize, usize),
    num_classes: usize,
    patch_size: usize,
) -> Result<(Vec<T>, FuseCtx<T>)> {
    let (lh, lw) = lr_size;
    let (oh, ow) = out_size;
    crop.validate(patch_size, oh, ow)?;
    if lr_logits.len() != lh * lw * num_classes {
        return Err(Error::ShapeMismatch {
            context: "hrda_fuse lr_logits",
            expected: alloc::format!("{}", lh * lw * num_classes),
            got: alloc::format!("{}", lr_logits.len()),
        });
    }
    if attn_logits.len() != lh * lw {
        return Err(Error::ShapeMismatch {
            context: "hrda_fuse attn_logits",
            expected: alloc::format!("{}", lh * lw),
            got: alloc::format!("{}", attn_logits.len()),
        });
    }
    if hr_logits.len() != crop.height * crop.width * num_classes {
        return Err(Error::ShapeMismatch {
            context: "hrda_fuse hr_logits",
            expected: alloc::format!("{}", crop.height * crop.width * num_classes),
            got: alloc::format!("{}", hr_logits.len()),
        });
    }

    let mut fused = bilinear_resize(lr_logits, lh, lw, num_classes, oh, ow);
    let a_up = bilinear_resize(attn_logits, lh, lw, 1, oh, ow);

    let box_px = crop.height * crop.width;
    let mut up_lr_in_box = alloc::vec![T::ZERO; box_px * num_classes];
    let mut a_in_box = alloc::vec![T::ZERO; box_px];
    for by in 0..crop.height {
        for bx in 0..crop.width {
            let src = ((crop.y0 + by) * ow + crop.x0 + bx) * num_classes;
            let dst = (by * crop.width + bx) * num_classes;
            let a = sigmoid(a_up[(crop.y0 + by) * ow + crop.x0 + bx]);
            a_in_box[by * crop.width + bx] = a;
            for c in 0..num_classes {
                let lr_v = fused[src + c];
                up_lr_in_box[dst + c] = lr_v;
                fused[src + c] = (T::ONE - a) * lr_v + a * hr_logits[dst + c];
            }
        }
    }
    Ok((
        fused,
        FuseCtx {
            lr_size,
            out_size,
            crop,
            up_lr_in_box,
            a_in_box,
            hr: hr_logits.to_vec(),
            num_classes,
        },
    ))
}

/// Gradients with respect to (lr_logits, attn_logits, hr_logits).
pub fn hrda_fuse_backward<T: Scalar>(
    ctx: &FuseCtx<T>,
    dfused: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let (lh, lw) = ctx.lr_size;
    let (oh, ow) = ctx.out_size;
    let c = ctx.num_classes;
    let crop = ctx.crop;

    let mut d_up_lr = dfused.to_vec();
    let mut d_a_up = alloc::vec![T::ZERO; oh * ow];
    let mut dhr = alloc::vec![T::ZERO; ctx.hr.len()];
    for by in 0..crop.height {
        for bx in 0..crop.width {
            let out_px = (crop.y0 + by) * ow + crop.x0 + bx;
            let box_px = by * crop.width + bx;
            let a = ctx.a_in_box[box_px];
            let mut da = T::ZERO;
            for ch in 0..c {
                let g = dfused[out_px * c + ch];
                d_up_lr[out_px * c + ch] = g * (T::ONE - a);
                dhr[box_px * c + ch] = g * a;
                da += g * (ctx.hr[box_px * c + ch] - ctx.up_lr_in_box[box_px * c + ch]);
            }
            // Through the sigmoid.
            d_a_up[out_px] = da * a * (T::ONE - a);
        }
    }
    let dlr = bilinear_resize_backward(&d_up_lr, lh, lw, c, oh, ow);
    let dattn = bilinear_resize_backward(&d_a_up, lh, lw, 1, oh, ow);
    (dlr, dattn, dhr)
}
