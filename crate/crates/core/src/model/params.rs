//! Parameter accounting: encoder presets with exact counts, plus the
//! analytic layer-by-layer sums the counter is checked against.

use super::encoder::EncoderCfg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainedSource {
    None,
    ExternalCheckpoint,
}

/// Bookkeeping record for an encoder configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderSpec {
    pub depth: usize,
    pub dim: usize,
    pub heads: usize,
    pub patch_size: usize,
    pub param_count: usize,
    pub pretrained: PretrainedSource,
}

impl EncoderSpec {
    pub fn from_cfg(cfg: &EncoderCfg, pretrained: PretrainedSource) -> Self {
        EncoderSpec {
            depth: cfg.depth,
            dim: cfg.dim,
            heads: cfg.heads,
            patch_size: cfg.patch_size,
            param_count: encoder_param_count(cfg),
            pretrained,
        }
    }

    /// The ViT-B/14 configuration kept for parameter-parity bookkeeping; it
    /// is never instantiated here, only counted.
    pub fn vit_b14() -> Self {
        let cfg = EncoderCfg {
            patch_size: 14,
            dim: 768,
            depth: 12,
            heads: 12,
            mlp_ratio: 4,
            base_grid: (37, 37),
        };
        EncoderSpec::from_cfg(&cfg, PretrainedSource::ExternalCheckpoint)
    }
}

/// Closed-form parameter count of an encoder built from `cfg`; must agree
/// with the store-based counter on any instantiated model.
pub fn encoder_param_count(cfg: &EncoderCfg) -> usize {
    let d = cfg.dim;
    let patch_dim = cfg.patch_size * cfg.patch_size * 3;
    let patch = patch_dim * d + d;
    let pos = cfg.base_grid.0 * cfg.base_grid.1 * d;
    let mask_token = d;
    let hidden = cfg.mlp_ratio * d;
    let per_block = 2 * d              // ln1
        + d * 3 * d + 3 * d            // qkv
        + d * d + d                    // proj
        + 2 * d                        // ln2
        + d * hidden + hidden          // mlp1
        + hidden * d + d; // mlp2
    let ln_f = 2 * d;
    patch + pos + mask_token + cfg.depth * per_block + ln_f
}

/// Closed-form parameter count of the decoder head.
pub fn decoder_param_count(dim: usize, num_classes: usize) -> usize {
    let half = dim / 2;
    let quarter = dim / 4;
    let up1 = dim * 4 * half + half;
    let norm1 = 2 * half;
    let up2 = half * 4 * quarter + quarter;
    let norm2 = 2 * quarter;
    let conv = 9 * quarter * quarter + quarter;
    let proj = quarter * num_classes + num_classes;
    up1 + norm1 + up2 + norm2 + conv + proj
}

/// Closed-form count of the scale-attention head.
pub fn scale_attention_param_count(dim: usize) -> usize {
    dim + 1
}
