//! Block-structured token masking.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::ImageSample;
use crate::error::Error;
use crate::rng::Rng;
use crate::Result;

/// Boolean mask over the token grid; true = masked. Masked cells form
/// axis-aligned `block_size`×`block_size` blocks, clipped at the far edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskPattern {
    pub grid: (usize, usize),
    pub mask: Vec<bool>,
    pub block_size: usize,
}

impl MaskPattern {
    pub fn none(grid: (usize, usize)) -> Self {
        MaskPattern { grid, mask: vec![false; grid.0 * grid.1], block_size: 1 }
    }

    pub fn all(grid: (usize, usize)) -> Self {
        MaskPattern { grid, mask: vec![true; grid.0 * grid.1], block_size: 1 }
    }

    #[inline]
    pub fn is_masked(&self, gy: usize, gx: usize) -> bool {
        self.mask[gy * self.grid.1 + gx]
    }

    pub fn masked_fraction(&self) -> f64 {
        if self.mask.is_empty() {
            return 0.0;
        }
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }
}

/// Mask each block independently with probability `ratio`, so the expected
/// masked-token fraction equals `ratio` for any block size.
pub fn sample_mask(
    rng: &mut Rng,
    grid: (usize, usize),
    ratio: f64,
    block_size: usize,
) -> Result<MaskPattern> {
    if block_size == 0 {
        return Err(Error::InvalidConfig("mask block_size must be >= 1".into()));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidConfig(format!("mask ratio {ratio} outside [0,1]")));
    }
    let (gh, gw) = grid;
    let mut mask = vec![false; gh * gw];
    let by_count = gh.div_ceil(block_size);
    let bx_count = gw.div_ceil(block_size);
    for by in 0..by_count {
        for bx in 0..bx_count {
            if rng.coin(ratio) {
                for y in by * block_size..((by + 1) * block_size).min(gh) {
                    for x in bx * block_size..((bx + 1) * block_size).min(gw) {
                        mask[y * gw + x] = true;
                    }
                }
            }
        }
    }
    Ok(MaskPattern { grid, mask, block_size })
}

/// Pixel-space variant of masking: zero every pixel under a masked token.
pub fn apply_image_mask(image: &ImageSample, pattern: &MaskPattern, patch_size: usize) -> ImageSample {
    let mut out = image.clone();
    let (gh, gw) = pattern.grid;
    debug_assert_eq!(gh * patch_size, image.height);
    debug_assert_eq!(gw * patch_size, image.width);
    for gy in 0..gh {
        for gx in 0..gw {
            if !pattern.is_masked(gy, gx) {
                continue;
            }
            for y in gy * patch_size..(gy + 1) * patch_size {
                for x in gx * patch_size..(gx + 1) * patch_size {
                    out.set_pixel(y, x, [0.0, 0.0, 0.0]);
                }
            }
        }
    }
    out
}
