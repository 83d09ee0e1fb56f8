//! Cross-domain class mixing: paste the pixels of half the source image's
//! classes onto the target image, composing labels from the source map and
//! the target pseudo-labels.

use alloc::vec::Vec;

use crate::domain::{ImageSample, PseudoLabel, SegMap, IGNORE};
use crate::error::Error;
use crate::rng::Rng;
use crate::Result;

/// Returns the mixed image and its composed label map. Pixels of the
/// selected source classes carry source content and source labels; all other
/// pixels carry target content and pseudo-labels (IGNORE where not kept).
pub fn dacs_mix(
    rng: &mut Rng,
    src_image: &ImageSample,
    src_labels: &SegMap,
    tgt_image: &ImageSample,
    tgt_pseudo: &PseudoLabel,
) -> Result<(ImageSample, SegMap)> {
    if src_image.height != tgt_image.height
        || src_image.width != tgt_image.width
        || !src_labels.same_shape(&tgt_pseudo.labels)
        || src_labels.height != src_image.height
        || src_labels.width != src_image.width
    {
        return Err(Error::ShapeMismatch {
            context: "dacs_mix",
            expected: alloc::format!("{}x{}", src_image.height, src_image.width),
            got: alloc::format!(
                "target {}x{}, labels {}x{}/{}x{}",
                tgt_image.height,
                tgt_image.width,
                src_labels.height,
                src_labels.width,
                tgt_pseudo.labels.height,
                tgt_pseudo.labels.width
            ),
        });
    }

    // Distinct classes present in the source map, then a uniform subset of
    // ceil(k/2) of them.
    let mut present: Vec<u8> = Vec::new();
    for &l in &src_labels.labels {
        if l != IGNORE && !present.contains(&l) {
            present.push(l);
        }
    }
    present.sort_unstable();
    let take = present.len().div_ceil(2);
    rng.shuffle(&mut present);
    let mut selected = present[..take].to_vec();
    selected.sort_unstable();

    let mut image = tgt_image.clone();
    image.domain = tgt_image.domain;
    let mut labels = tgt_pseudo.labels.clone();
    for (i, &src_label) in src_labels.labels.iter().enumerate() {
        if src_label != IGNORE && selected.contains(&src_label) {
            let (y, x) = (i / src_labels.width, i % src_labels.width);
            image.set_pixel(y, x, src_image.pixel(y, x));
            labels.labels[i] = src_label;
        }
    }
    Ok((image, labels))
}
