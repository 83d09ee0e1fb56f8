//! Rare-class source sampling: classes are drawn with probability rising as
//! their pixel frequency falls, then an image containing the drawn class is
//! picked uniformly.

use alloc::vec::Vec;

use crate::error::Error;
use crate::rng::Rng;
use crate::Result;

use super::dataset::DatasetHandle;

/// P(c) = softmax((1 - f_c) / T). Rarer classes get strictly larger mass.
pub fn rare_class_weights(class_pixel_freq: &[f64], temperature: f64) -> Result<Vec<f64>> {
    if temperature <= 0.0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "rare-class temperature {temperature} must be positive"
        )));
    }
    let scores: Vec<f64> = class_pixel_freq.iter().map(|&f| (1.0 - f) / temperature).collect();
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| libm::exp(s - m)).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.iter().map(|&e| e / total).collect())
}

/// Draw a class from `weights`, then a uniform image containing it. Classes
/// present in no image are renormalized away.
pub fn sample_source<'a>(
    rng: &mut Rng,
    dataset: &'a DatasetHandle,
    weights: &[f64],
) -> Result<(usize, &'a crate::domain::ImageSample, &'a crate::domain::SegMap)> {
    dataset.guard_trainable()?;
    let stats = dataset
        .stats()
        .ok_or_else(|| Error::InvalidDataset("rare-class sampling needs a labeled dataset".into()))?;
    if weights.len() != dataset.num_classes {
        return Err(Error::ClassMismatch { expected: dataset.num_classes, got: weights.len() });
    }
    // Zero out classes that appear in no image, keep the rest proportional.
    let effective: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(c, &w)| if stats.images_with_class[c].is_empty() { 0.0 } else { w })
        .collect();
    let mass: f64 = effective.iter().sum();
    if mass <= 0.0 {
        return Err(Error::InvalidDataset(alloc::format!(
            "no image in `{}` contains any positively weighted class",
            dataset.name
        )));
    }
    let class = rng.choose_weighted(&effective);
    let candidates = &stats.images_with_class[class];
    let idx = candidates[rng.below(candidates.len())];
    let (img, seg) = dataset.pair(idx)?;
    Ok((idx, img, seg))
}
