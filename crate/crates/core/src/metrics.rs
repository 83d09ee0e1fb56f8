//! Confusion-matrix accumulation and IoU metrics.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::{SegMap, IGNORE};
use crate::error::Error;
use crate::Result;

/// C×C pixel counts; rows index the ground-truth class, columns the
/// predicted class. Ignored ground-truth pixels contribute nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix { num_classes, counts: vec![0; num_classes * num_classes] }
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    #[inline]
    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Accumulate one prediction/ground-truth pair.
    pub fn update(&mut self, pred: &SegMap, gt: &SegMap) -> Result<()> {
        if !pred.same_shape(gt) {
            return Err(Error::ShapeMismatch {
                context: "ConfusionMatrix::update",
                expected: format!("{}x{}", gt.height, gt.width),
                got: format!("{}x{}", pred.height, pred.width),
            });
        }
        if pred.num_classes != self.num_classes || gt.num_classes != self.num_classes {
            return Err(Error::ClassMismatch {
                expected: self.num_classes,
                got: if pred.num_classes != self.num_classes {
                    pred.num_classes
                } else {
                    gt.num_classes
                },
            });
        }
        for (&p, &g) in pred.labels.iter().zip(gt.labels.iter()) {
            if g == IGNORE {
                continue;
            }
            debug_assert!(p != IGNORE, "predictions must be dense class ids");
            self.counts[g as usize * self.num_classes + p as usize] += 1;
        }
        Ok(())
    }

    /// Merge a shard into this matrix. Addition, so sharded evaluation over
    /// any partition of the data reduces to the same totals.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(Error::ClassMismatch { expected: self.num_classes, got: other.num_classes });
        }
        for (a, b) in self.counts.iter_mut().zip(other.counts.iter()) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class IoU and its mean over classes with a nonzero union.
    pub fn miou(&self) -> Result<(Vec<Option<f64>>, f64)> {
        let c = self.num_classes;
        let mut per_class = Vec::with_capacity(c);
        let mut sum = 0.0f64;
        let mut defined = 0usize;
        for k in 0..c {
            let tp = self.count(k, k);
            let fp: u64 = (0..c).filter(|&g| g != k).map(|g| self.count(g, k)).sum();
            let fngt: u64 = (0..c).filter(|&p| p != k).map(|p| self.count(k, p)).sum();
            let union = tp + fp + fngt;
            if union == 0 {
                per_class.push(None);
            } else {
                let iou = tp as f64 / union as f64;
                per_class.push(Some(iou));
                sum += iou;
                defined += 1;
            }
        }
        if defined == 0 {
            return Err(Error::EmptyEvaluation);
        }
        Ok((per_class, sum / defined as f64))
    }

    pub fn into_report(self, dataset_tag: String, split_tag: String) -> Result<EvalReport> {
        let (per_class_iou, miou) = self.miou()?;
        let pixel_count = self.total();
        Ok(EvalReport { per_class_iou, miou, pixel_count, dataset_tag, split_tag })
    }
}

/// Evaluation summary for one dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// IoU per class; `None` where the class never appears in ground truth
    /// or prediction (excluded from the mean).
    pub per_class_iou: Vec<Option<f64>>,
    pub miou: f64,
    pub pixel_count: u64,
    pub dataset_tag: String,
    pub split_tag: String,
}
