//! In-memory dataset handles with role tags. The roles drive the leakage
//! guard: evaluation splits can never be handed to a training sampler.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{ImageSample, SegMap, IGNORE};
use crate::error::Error;
use crate::Result;

/// Minimum pixels of a class in an image before the image counts as
/// containing that class for rare-class sampling.
pub const MIN_PRESENCE_PIXELS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetRole {
    SourceTrain,
    TargetTrain,
    /// Labeled twin of the target train split; oracle training only.
    TargetTrainLabeled,
    TargetVal,
    /// Labeled out-of-target train split; oracle training only.
    OutOfTargetTrain,
    OutOfTargetVal,
}

impl DatasetRole {
    /// Splits that must never be consumed by any training sampler.
    pub fn eval_only(self) -> bool {
        matches!(self, DatasetRole::TargetVal | DatasetRole::OutOfTargetVal)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetRole::SourceTrain => "source_train",
            DatasetRole::TargetTrain => "target_train",
            DatasetRole::TargetTrainLabeled => "target_train_labeled",
            DatasetRole::TargetVal => "target_val",
            DatasetRole::OutOfTargetTrain => "out_of_target_train",
            DatasetRole::OutOfTargetVal => "out_of_target_val",
        }
    }
}

/// Pixel frequency and per-image class presence of a labeled dataset.
#[derive(Debug, Clone)]
pub struct DatasetStats {
    /// Fraction of non-IGNORE pixels per class; sums to 1.
    pub class_pixel_freq: Vec<f64>,
    /// Per image: which classes it contains (with at least
    /// `MIN_PRESENCE_PIXELS` pixels).
    pub presence: Vec<Vec<bool>>,
    /// Image indices per class, derived from `presence`.
    pub images_with_class: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub name: String,
    pub role: DatasetRole,
    pub num_classes: usize,
    pub labeled: bool,
    samples: Vec<(ImageSample, Option<SegMap>)>,
    stats: Option<DatasetStats>,
}

impl DatasetHandle {
    pub fn new_labeled(
        name: impl Into<String>,
        role: DatasetRole,
        pairs: Vec<(ImageSample, SegMap)>,
        num_classes: usize,
    ) -> Result<Self> {
        let name = name.into();
        if pairs.is_empty() {
            return Err(Error::InvalidDataset(format!("no samples in `{name}`")));
        }
        for (i, (img, seg)) in pairs.iter().enumerate() {
            if seg.height != img.height || seg.width != img.width {
                return Err(Error::ShapeMismatch {
                    context: "DatasetHandle::new_labeled",
                    expected: format!("{}x{}", img.height, img.width),
                    got: format!("{}x{} (sample {i})", seg.height, seg.width),
                });
            }
            if seg.num_classes != num_classes {
                return Err(Error::ClassMismatch { expected: num_classes, got: seg.num_classes });
            }
        }
        let samples: Vec<_> = pairs.into_iter().map(|(i, s)| (i, Some(s))).collect();
        let stats = Some(compute_stats(&samples, num_classes));
        Ok(DatasetHandle { name, role, num_classes, labeled: true, samples, stats })
    }

    pub fn new_unlabeled(
        name: impl Into<String>,
        role: DatasetRole,
        images: Vec<ImageSample>,
        num_classes: usize,
    ) -> Result<Self> {
        let name = name.into();
        if images.is_empty() {
            return Err(Error::InvalidDataset(format!("no samples in `{name}`")));
        }
        let samples = images.into_iter().map(|i| (i, None)).collect();
        Ok(DatasetHandle { name, role, num_classes, labeled: false, samples, stats: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image(&self, idx: usize) -> &ImageSample {
        &self.samples[idx].0
    }

    pub fn label(&self, idx: usize) -> Option<&SegMap> {
        self.samples[idx].1.as_ref()
    }

    pub fn pair(&self, idx: usize) -> Result<(&ImageSample, &SegMap)> {
        let (img, seg) = &self.samples[idx];
        match seg {
            Some(seg) => Ok((img, seg)),
            None => Err(Error::InvalidDataset(format!(
                "sample {idx} of `{}` has no label",
                self.name
            ))),
        }
    }

    pub fn stats(&self) -> Option<&DatasetStats> {
        self.stats.as_ref()
    }

    /// Fail unless this dataset may feed a training sampler.
    pub fn guard_trainable(&self) -> Result<()> {
        if self.role.eval_only() {
            return Err(Error::DataLeakage(format!(
                "dataset `{}` with role {} is reserved for evaluation",
                self.name,
                self.role.as_str()
            )));
        }
        Ok(())
    }
}

fn compute_stats(samples: &[(ImageSample, Option<SegMap>)], num_classes: usize) -> DatasetStats {
    let mut pixel_counts = vec![0u64; num_classes];
    let mut presence = Vec::with_capacity(samples.len());
    for (_, seg) in samples {
        let seg = seg.as_ref().expect("stats need labels");
        let mut per_image = vec![0usize; num_classes];
        for &l in &seg.labels {
            if l != IGNORE {
                per_image[l as usize] += 1;
            }
        }
        for (c, &n) in per_image.iter().enumerate() {
            pixel_counts[c] += n as u64;
        }
        presence.push(per_image.iter().map(|&n| n >= MIN_PRESENCE_PIXELS).collect::<Vec<bool>>());
    }
    let total: u64 = pixel_counts.iter().sum();
    let class_pixel_freq: Vec<f64> = if total == 0 {
        vec![0.0; num_classes]
    } else {
        pixel_counts.iter().map(|&n| n as f64 / total as f64).collect()
    };
    let mut images_with_class = vec![Vec::new(); num_classes];
    for (img_idx, p) in presence.iter().enumerate() {
        for (c, &has) in p.iter().enumerate() {
            if has {
                images_with_class[c].push(img_idx);
            }
        }
    }
    DatasetStats { class_pixel_freq, presence, images_with_class }
}
