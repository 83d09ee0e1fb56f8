//! Single-scale token encoder: patch embedding, optional learnable-token
//! masking, learned position embeddings, pre-norm transformer blocks.
//! Batched inputs stack along the row dimension so the projections run as
//! single matrix products.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::ImageSample;
use crate::error::Error;
use crate::nn::{
    bilinear_resize, bilinear_resize_backward, gelu, gelu_backward, AttentionCtx, LayerNorm,
    LayerNormCtx, Linear, LinearCtx, MultiHeadAttention,
};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::{VarId, VarStore};
use crate::tensor::Tensor;
use crate::Result;

use super::masking::MaskPattern;
use super::TokenGrid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderCfg {
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Grid the learned position table is stored at; other grids interpolate.
    pub base_grid: (usize, usize),
}

impl EncoderCfg {
    /// Small encoder used by the synthetic benchmark and the numeric checks.
    pub fn toy() -> Self {
        EncoderCfg { patch_size: 8, dim: 64, depth: 4, heads: 4, mlp_ratio: 4, base_grid: (8, 8) }
    }
}

#[derive(Debug, Clone)]
struct Block {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    mlp1: Linear,
    mlp2: Linear,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderCfg,
    patch: Linear,
    pos: VarId,
    mask_token: VarId,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
}

pub struct BlockCtx<T: Scalar> {
    ln1: LayerNormCtx<T>,
    attn: AttentionCtx<T>,
    ln2: LayerNormCtx<T>,
    mlp1: LinearCtx<T>,
    mlp1_out: Vec<T>,
    mlp2: LinearCtx<T>,
}

pub struct EncodeCtx<T: Scalar> {
    patch_ctx: LinearCtx<T>,
    masked_rows: Vec<usize>,
    grid: (usize, usize),
    batch: usize,
    blocks: Vec<BlockCtx<T>>,
    ln_f: LayerNormCtx<T>,
}

impl Encoder {
    pub fn new<T: Scalar>(store: &mut VarStore<T>, cfg: EncoderCfg, rng: &mut Rng) -> Self {
        let patch_dim = cfg.patch_size * cfg.patch_size * 3;
        let patch = Linear::new(store, "enc.patch", patch_dim, cfg.dim, true, rng);
        let mut pos_init = Tensor::zeros(&[cfg.base_grid.0 * cfg.base_grid.1, cfg.dim]);
        for v in pos_init.data_mut() {
            *v = T::from_f64(rng.trunc_normal(0.02));
        }
        let pos = store.add("enc.pos", pos_init);
        let mut mask_init = Tensor::zeros(&[cfg.dim]);
        for v in mask_init.data_mut() {
            *v = T::from_f64(rng.trunc_normal(0.02));
        }
        let mask_token = store.add("enc.mask_token", mask_init);
        let blocks = (0..cfg.depth)
            .map(|i| {
                let p = format!("enc.block{i}");
                Block {
                    ln1: LayerNorm::new(store, &format!("{p}.ln1"), cfg.dim, rng),
                    attn: MultiHeadAttention::new(store, &format!("{p}.attn"), cfg.dim, cfg.heads, rng),
                    ln2: LayerNorm::new(store, &format!("{p}.ln2"), cfg.dim, rng),
                    mlp1: Linear::new(store, &format!("{p}.mlp1"), cfg.dim, cfg.mlp_ratio * cfg.dim, true, rng),
                    mlp2: Linear::new(store, &format!("{p}.mlp2"), cfg.mlp_ratio * cfg.dim, cfg.dim, true, rng),
                }
            })
            .collect();
        let ln_f = LayerNorm::new(store, "enc.ln_f", cfg.dim, rng);
        Encoder { cfg, patch, pos, mask_token, blocks, ln_f }
    }

    pub fn grid_for(&self, image: &ImageSample) -> Result<(usize, usize)> {
        let p = self.cfg.patch_size;
        if image.height == 0 || image.width == 0 || image.height % p != 0 || image.width % p != 0 {
            return Err(Error::ShapeMismatch {
                context: "Encoder::encode",
                expected: format!("dimensions divisible by patch size {p}"),
                got: format!("{}x{}", image.height, image.width),
            });
        }
        Ok((image.height / p, image.width / p))
    }

    /// Flatten non-overlapping patches of one image into `out` rows.
    fn patchify_into<T: Scalar>(&self, image: &ImageSample, grid: (usize, usize), out: &mut [T]) {
        let p = self.cfg.patch_size;
        let (gh, gw) = grid;
        let row_len = p * p * 3;
        for gy in 0..gh {
            for gx in 0..gw {
                let base = (gy * gw + gx) * row_len;
                for dy in 0..p {
                    let src = ((gy * p + dy) * image.width + gx * p) * 3;
                    let dst = base + dy * p * 3;
                    for i in 0..p * 3 {
                        out[dst + i] = T::from_f64(image.pixels[src + i] as f64);
                    }
                }
            }
        }
    }

    fn pos_for_grid<T: Scalar>(&self, store: &VarStore<T>, grid: (usize, usize)) -> Vec<T> {
        let base = self.cfg.base_grid;
        let pos = store.value(self.pos).data();
        if grid == base {
            pos.to_vec()
        } else {
            bilinear_resize(pos, base.0, base.1, self.cfg.dim, grid.0, grid.1)
        }
    }

    /// Encode a batch of same-sized images; `masks` is per image.
    pub fn encode_batch<T: Scalar>(
        &self,
        store: &VarStore<T>,
        images: &[&ImageSample],
        masks: &[Option<&MaskPattern>],
    ) -> Result<(Vec<T>, (usize, usize), EncodeCtx<T>)> {
        let batch = images.len();
        if batch == 0 || masks.len() != batch {
            return Err(Error::InvalidConfig("encode_batch needs matching images and masks".into()));
        }
        let grid = self.grid_for(images[0])?;
        for image in images.iter() {
            if self.grid_for(image)? != grid {
                return Err(Error::ShapeMismatch {
                    context: "Encoder::encode_batch",
                    expected: format!("all images {}x{}", images[0].height, images[0].width),
                    got: format!("{}x{}", image.height, image.width),
                });
            }
        }
        for mask in masks.iter().flatten() {
            if mask.grid != grid {
                return Err(Error::ShapeMismatch {
                    context: "Encoder::encode mask",
                    expected: format!("{}x{}", grid.0, grid.1),
                    got: format!("{}x{}", mask.grid.0, mask.grid.1),
                });
            }
        }

        let tokens = grid.0 * grid.1;
        let d = self.cfg.dim;
        let patch_dim = self.cfg.patch_size * self.cfg.patch_size * 3;
        let mut patches = vec![T::ZERO; batch * tokens * patch_dim];
        for (b, image) in images.iter().enumerate() {
            self.patchify_into(image, grid, &mut patches[b * tokens * patch_dim..(b + 1) * tokens * patch_dim]);
        }
        let (mut x, patch_ctx) = self.patch.forward(store, &patches, batch * tokens);

        // Replace masked embeddings with the learnable token, then add
        // positions, so positional information survives masking.
        let mut masked_rows = Vec::new();
        let token = store.value(self.mask_token).data().to_vec();
        for (b, mask) in masks.iter().enumerate() {
            if let Some(m) = mask {
                for (row, &masked) in m.mask.iter().enumerate() {
                    if masked {
                        let global = b * tokens + row;
                        x[global * d..(global + 1) * d].copy_from_slice(&token);
                        masked_rows.push(global);
                    }
                }
            }
        }
        let pos = self.pos_for_grid(store, grid);
        for b in 0..batch {
            let base = b * tokens * d;
            for (xv, pv) in x[base..base + tokens * d].iter_mut().zip(pos.iter()) {
                *xv += *pv;
            }
        }

        let rows = batch * tokens;
        let mut block_ctxs = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (normed, ln1_ctx) = block.ln1.forward(store, &x, rows);
            let (attn_out, attn_ctx) = block.attn.forward(store, &normed, tokens, batch);
            for (xv, av) in x.iter_mut().zip(attn_out.iter()) {
                *xv += *av;
            }
            let (normed2, ln2_ctx) = block.ln2.forward(store, &x, rows);
            let (hidden, mlp1_ctx) = block.mlp1.forward(store, &normed2, rows);
            let activated = gelu(&hidden);
            let (mlp_out, mlp2_ctx) = block.mlp2.forward(store, &activated, rows);
            for (xv, mv) in x.iter_mut().zip(mlp_out.iter()) {
                *xv += *mv;
            }
            block_ctxs.push(BlockCtx {
                ln1: ln1_ctx,
                attn: attn_ctx,
                ln2: ln2_ctx,
                mlp1: mlp1_ctx,
                mlp1_out: hidden,
                mlp2: mlp2_ctx,
            });
        }
        let (out, ln_f_ctx) = self.ln_f.forward(store, &x, rows);
        Ok((
            out,
            grid,
            EncodeCtx { patch_ctx, masked_rows, grid, batch, blocks: block_ctxs, ln_f: ln_f_ctx },
        ))
    }

    /// Single-image encode returning the token grid.
    pub fn encode<T: Scalar>(
        &self,
        store: &VarStore<T>,
        image: &ImageSample,
        mask: Option<&MaskPattern>,
    ) -> Result<(TokenGrid<T>, EncodeCtx<T>)> {
        let (tokens, grid, ctx) = self.encode_batch(store, &[image], &[mask])?;
        Ok((
            TokenGrid { tokens, grid, dim: self.cfg.dim, patch_size: self.cfg.patch_size },
            ctx,
        ))
    }

    /// Accumulate parameter gradients given the gradient on the output
    /// tokens. Input images receive no gradient.
    pub fn backward<T: Scalar>(&self, store: &mut VarStore<T>, ctx: &EncodeCtx<T>, dtokens: &[T]) {
        let d = self.cfg.dim;
        let tokens = ctx.grid.0 * ctx.grid.1;
        let mut dx = self.ln_f.backward(store, &ctx.ln_f, dtokens);
        for (block, bctx) in self.blocks.iter().zip(ctx.blocks.iter()).rev() {
            // MLP branch.
            let dmlp_out = dx.clone();
            let dactivated = block.mlp2.backward(store, &bctx.mlp2, &dmlp_out);
            let dhidden = gelu_backward(&bctx.mlp1_out, &dactivated);
            let dnormed2 = block.mlp1.backward(store, &bctx.mlp1, &dhidden);
            let dres = block.ln2.backward(store, &bctx.ln2, &dnormed2);
            for (xv, rv) in dx.iter_mut().zip(dres.iter()) {
                *xv += *rv;
            }
            // Attention branch.
            let dattn_out = dx.clone();
            let dnormed = block.attn.backward(store, &bctx.attn, &dattn_out);
            let dres = block.ln1.backward(store, &bctx.ln1, &dnormed);
            for (xv, rv) in dx.iter_mut().zip(dres.iter()) {
                *xv += *rv;
            }
        }
        // Position-embedding gradient, summed over the batch, through the
        // interpolation when the grid differs from the base table.
        let base = self.cfg.base_grid;
        if ctx.grid == base {
            let gpos = store.grad_mut(self.pos).data_mut();
            for b in 0..ctx.batch {
                let src = &dx[b * tokens * d..(b + 1) * tokens * d];
                for (g, &v) in gpos.iter_mut().zip(src.iter()) {
                    *g += v;
                }
            }
        } else {
            let mut dpos_grid = vec![T::ZERO; tokens * d];
            for b in 0..ctx.batch {
                let src = &dx[b * tokens * d..(b + 1) * tokens * d];
                for (g, &v) in dpos_grid.iter_mut().zip(src.iter()) {
                    *g += v;
                }
            }
            let dpos = bilinear_resize_backward(&dpos_grid, base.0, base.1, d, ctx.grid.0, ctx.grid.1);
            let gpos = store.grad_mut(self.pos).data_mut();
            for (g, &v) in gpos.iter_mut().zip(dpos.iter()) {
                *g += v;
            }
        }
        // Masked rows feed the mask token; everything else feeds the patch
        // embedding.
        let mut dembed = dx;
        if !ctx.masked_rows.is_empty() {
            let gtoken = store.grad_mut(self.mask_token).data_mut();
            for &row in &ctx.masked_rows {
                for (g, &v) in gtoken.iter_mut().zip(dembed[row * d..(row + 1) * d].iter()) {
                    *g += v;
                }
            }
            for &row in &ctx.masked_rows {
                dembed[row * d..(row + 1) * d].fill(T::ZERO);
            }
        }
        self.patch.backward(store, &ctx.patch_ctx, &dembed);
    }
}
