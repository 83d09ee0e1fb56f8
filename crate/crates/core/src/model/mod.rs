//! The segmentation model: token encoder, upsampling decoder, and the
//! optional multi-resolution attention head, all over one parameter store.

mod decoder;
mod encoder;
mod hrda;
mod masking;
mod params;

pub use decoder::{DecodeCtx, Decoder};
pub use encoder::{EncodeCtx, Encoder, EncoderCfg};
pub use hrda::{hrda_fuse, hrda_fuse_backward, CropBox, FuseCtx, ScaleAttention};
pub use masking::{apply_image_mask, sample_mask, MaskPattern};
pub use params::{
    decoder_param_count, encoder_param_count, scale_attention_param_count, EncoderSpec,
    PretrainedSource,
};

use alloc::vec::Vec;

use crate::domain::{ImageSample, SegMap};
use crate::error::Error;
use crate::nn::{bilinear_resize, softmax_rows, LinearCtx};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::VarStore;
use crate::Result;

/// Single-scale patch-token features from the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid<T: Scalar> {
    /// `(gh*gw) × dim`, row-major over the grid.
    pub tokens: Vec<T>,
    pub grid: (usize, usize),
    pub dim: usize,
    pub patch_size: usize,
}

/// Encoder + decoder (+ optional scale-attention head) sharing a store.
#[derive(Debug, Clone)]
pub struct SegModel<T: Scalar> {
    pub store: VarStore<T>,
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub scale_attention: Option<ScaleAttention>,
    pub num_classes: usize,
}

pub struct ForwardCtx<T: Scalar> {
    pub enc: EncodeCtx<T>,
    pub dec: DecodeCtx<T>,
}

pub struct HrdaForwardCtx<T: Scalar> {
    lr: ForwardCtx<T>,
    hr: ForwardCtx<T>,
    attn: LinearCtx<T>,
    fuse: FuseCtx<T>,
    lr_grid: (usize, usize),
}

impl<T: Scalar> SegModel<T> {
    pub fn new(cfg: EncoderCfg, num_classes: usize, use_hrda: bool, seed: u64) -> Result<Self> {
        let mut rng = Rng::new(seed).fork(0x6d6f64656c); // "model"
        let mut store = VarStore::new();
        let encoder = Encoder::new(&mut store, cfg, &mut rng);
        let decoder = Decoder::new(&mut store, encoder.cfg.dim, num_classes, &mut rng)?;
        let scale_attention =
            use_hrda.then(|| ScaleAttention::new(&mut store, encoder.cfg.dim, &mut rng));
        Ok(SegModel { store, encoder, decoder, scale_attention, num_classes })
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    pub fn cast<U: Scalar>(&self) -> SegModel<U> {
        SegModel {
            store: self.store.cast(),
            encoder: self.encoder.clone(),
            decoder: self.decoder.clone(),
            scale_attention: self.scale_attention.clone(),
            num_classes: self.num_classes,
        }
    }

    /// Full single-pass forward: logits `[H*W, C]` at image resolution.
    pub fn forward(
        &self,
        image: &ImageSample,
        mask: Option<&MaskPattern>,
    ) -> Result<(Vec<T>, ForwardCtx<T>)> {
        self.forward_batch(&[image], &[mask])
    }

    /// Batched forward over same-sized images: logits `[B·H·W, C]` stacked
    /// in input order.
    pub fn forward_batch(
        &self,
        images: &[&ImageSample],
        masks: &[Option<&MaskPattern>],
    ) -> Result<(Vec<T>, ForwardCtx<T>)> {
        let (tokens, grid, enc) = self.encoder.encode_batch(&self.store, images, masks)?;
        let (logits, dec) = self.decoder.decode_batch(
            &self.store,
            &tokens,
            grid,
            self.encoder.cfg.patch_size,
            images.len(),
        )?;
        Ok((logits, ForwardCtx { enc, dec }))
    }

    /// Backward through decoder and encoder, accumulating gradients.
    pub fn backward(&mut self, ctx: &ForwardCtx<T>, dlogits: &[T]) {
        let dtokens = self.decoder.backward(&mut self.store, &ctx.dec, dlogits);
        self.encoder.backward(&mut self.store, &ctx.enc, &dtokens);
    }

    /// Multi-resolution forward: one half-scale full-context pass, one
    /// full-scale crop pass, and the attention fusion. `masks` apply to the
    /// LR and HR passes respectively.
    pub fn forward_hrda(
        &self,
        image: &ImageSample,
        crop: CropBox,
        masks: Option<(&MaskPattern, &MaskPattern)>,
    ) -> Result<(Vec<T>, HrdaForwardCtx<T>)> {
        let attn_head = self.scale_attention.as_ref().ok_or_else(|| {
            Error::InvalidConfig("multi-resolution forward requires the attention head".into())
        })?;
        let (h, w) = (image.height, image.width);
        crop.validate(self.encoder.cfg.patch_size, h, w)?;

        let lr_image = downscale_half(image);
        let hr_image = crop_image(image, crop);
        let (lr_mask, hr_mask) = match masks {
            Some((a, b)) => (Some(a), Some(b)),
            None => (None, None),
        };

        let (lr_tokens, lr_enc) = self.encoder.encode(&self.store, &lr_image, lr_mask)?;
        let (lr_logits, lr_dec) = self.decoder.decode(&self.store, &lr_tokens)?;
        let (attn_up, attn_ctx) = attn_head.forward(&self.store, &lr_tokens);
        let lr_grid = lr_tokens.grid;

        let (hr_tokens, hr_enc) = self.encoder.encode(&self.store, &hr_image, hr_mask)?;
        let (hr_logits, hr_dec) = self.decoder.decode(&self.store, &hr_tokens)?;

        let (fused, fuse) = hrda_fuse(
            &lr_logits,
            (lr_image.height, lr_image.width),
            &attn_up,
            &hr_logits,
            crop,
            (h, w),
            self.num_classes,
            self.encoder.cfg.patch_size,
        )?;
        Ok((
            fused,
            HrdaForwardCtx {
                lr: ForwardCtx { enc: lr_enc, dec: lr_dec },
                hr: ForwardCtx { enc: hr_enc, dec: hr_dec },
                attn: attn_ctx,
                fuse,
                lr_grid,
            },
        ))
    }

    pub fn backward_hrda(&mut self, ctx: &HrdaForwardCtx<T>, dfused: &[T]) {
        let (dlr_logits, dattn_up, dhr_logits) = hrda_fuse_backward(&ctx.fuse, dfused);
        let attn_head = self.scale_attention.clone().expect("attention head present");
        let patch = self.encoder.cfg.patch_size;

        let dlr_tokens_from_attn =
            attn_head.backward(&mut self.store, &ctx.attn, ctx.lr_grid, patch, &dattn_up);
        let mut dlr_tokens = self.decoder.backward(&mut self.store, &ctx.lr.dec, &dlr_logits);
        for (a, b) in dlr_tokens.iter_mut().zip(dlr_tokens_from_attn.iter()) {
            *a += *b;
        }
        self.encoder.backward(&mut self.store, &ctx.lr.enc, &dlr_tokens);

        let dhr_tokens = self.decoder.backward(&mut self.store, &ctx.hr.dec, &dhr_logits);
        self.encoder.backward(&mut self.store, &ctx.hr.enc, &dhr_tokens);
    }

    /// Per-pixel softmax probabilities, `[H*W, C]`.
    pub fn predict_probs(&self, image: &ImageSample) -> Result<Vec<T>> {
        let (mut logits, _) = self.forward(image, None)?;
        softmax_rows(&mut logits, self.num_classes);
        Ok(logits)
    }

    /// Stacked per-pixel softmax probabilities for a batch of same-sized
    /// images, `[B·H·W, C]`.
    pub fn predict_probs_batch(&self, images: &[&ImageSample]) -> Result<Vec<T>> {
        let masks = alloc::vec![None; images.len()];
        let (mut logits, _) = self.forward_batch(images, &masks)?;
        softmax_rows(&mut logits, self.num_classes);
        Ok(logits)
    }

    /// Argmax prediction as a label map.
    pub fn predict(&self, image: &ImageSample) -> Result<SegMap> {
        let (logits, _) = self.forward(image, None)?;
        Ok(argmax_map(&logits, image.height, image.width, self.num_classes))
    }
}

/// Argmax over class logits (or probabilities) into a label map.
pub fn argmax_map<T: Scalar>(scores: &[T], height: usize, width: usize, num_classes: usize) -> SegMap {
    debug_assert_eq!(scores.len(), height * width * num_classes);
    let mut labels = Vec::with_capacity(height * width);
    for row in scores.chunks_exact(num_classes) {
        let mut best = 0usize;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        labels.push(best as u8);
    }
    SegMap { height, width, labels, num_classes }
}

/// Bilinear half-scale downsample of an image.
pub fn downscale_half(image: &ImageSample) -> ImageSample {
    let (h, w) = (image.height / 2, image.width / 2);
    let pixels = bilinear_resize(&image.pixels, image.height, image.width, 3, h, w);
    ImageSample { height: h, width: w, pixels, domain: image.domain }
}

/// Extract the crop box at native resolution.
pub fn crop_image(image: &ImageSample, crop: CropBox) -> ImageSample {
    let mut out = ImageSample::zeros(crop.height, crop.width, image.domain);
    for y in 0..crop.height {
        for x in 0..crop.width {
            out.set_pixel(y, x, image.pixel(crop.y0 + y, crop.x0 + x));
        }
    }
    out
}
