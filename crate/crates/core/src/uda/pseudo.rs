//! Teacher pseudo-label generation with horizontal-flip aggregation.

use alloc::vec::Vec;

use crate::domain::{ImageSample, PseudoLabel, SegMap};
use crate::model::SegModel;
use crate::scalar::Scalar;
use crate::Result;

/// Average the teacher's softmax on the image and its un-flipped mirror,
/// take the argmax, and keep pixels whose max probability reaches `rho`.
/// No gradients are involved; the teacher store is untouched.
pub fn generate_pseudo_label<T: Scalar>(
    teacher: &SegModel<T>,
    image: &ImageSample,
    rho: f64,
) -> Result<PseudoLabel> {
    Ok(generate_pseudo_labels(teacher, &[image], rho)?.pop().expect("one label per image"))
}

/// Batched variant: the images and their mirrors go through the teacher as
/// one stacked forward pass.
pub fn generate_pseudo_labels<T: Scalar>(
    teacher: &SegModel<T>,
    images: &[&ImageSample],
    rho: f64,
) -> Result<Vec<PseudoLabel>> {
    if images.is_empty() {
        return Ok(Vec::new());
    }
    let c = teacher.num_classes;
    let (h, w) = (images[0].height, images[0].width);
    let flipped: Vec<ImageSample> = images.iter().map(|i| i.hflip()).collect();
    let mut stacked: Vec<&ImageSample> = images.to_vec();
    stacked.extend(flipped.iter());
    let probs = teacher.predict_probs_batch(&stacked)?;

    let px = h * w;
    let mut out = Vec::with_capacity(images.len());
    for (b, _) in images.iter().enumerate() {
        let plain = &probs[b * px * c..(b + 1) * px * c];
        let mirror = &probs[(images.len() + b) * px * c..(images.len() + b + 1) * px * c];
        let mut labels = Vec::with_capacity(px);
        let mut confidence = Vec::with_capacity(px);
        for y in 0..h {
            for x in 0..w {
                let a = &plain[(y * w + x) * c..(y * w + x + 1) * c];
                let m = &mirror[(y * w + (w - 1 - x)) * c..(y * w + (w - 1 - x) + 1) * c];
                let mut best = 0usize;
                let mut best_p = f64::NEG_INFINITY;
                for k in 0..c {
                    let p = 0.5 * (a[k].to_f64() + m[k].to_f64());
                    if p > best_p {
                        best_p = p;
                        best = k;
                    }
                }
                labels.push(best as u8);
                confidence.push(best_p as f32);
            }
        }
        let seg = SegMap { height: h, width: w, labels, num_classes: c };
        out.push(PseudoLabel::from_confidence(seg, confidence, rho as f32)?);
    }
    Ok(out)
}
