//! Image, label-map, and pseudo-label carriers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Label value that contributes to no loss and no metric.
pub const IGNORE: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainTag {
    Source,
    Target,
    OutOfTarget,
}

impl DomainTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::Source => "source",
            DomainTag::Target => "target",
            DomainTag::OutOfTarget => "out_of_target",
        }
    }
}

/// An H×W×3 image with values in [0, 1], channel-interleaved (HWC).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<f32>,
    pub domain: DomainTag,
}

impl ImageSample {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>, domain: DomainTag) -> Result<Self> {
        if pixels.len() != height * width * 3 {
            return Err(Error::ShapeMismatch {
                context: "ImageSample::new",
                expected: format!("{}x{}x3 = {}", height, width, height * width * 3),
                got: format!("{}", pixels.len()),
            });
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidDataset(String::from("pixel value outside [0,1]")));
        }
        Ok(ImageSample { height, width, pixels, domain })
    }

    pub fn zeros(height: usize, width: usize, domain: DomainTag) -> Self {
        ImageSample { height, width, pixels: vec![0.0; height * width * 3], domain }
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let base = (y * self.width + x) * 3;
        [self.pixels[base], self.pixels[base + 1], self.pixels[base + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let base = (y * self.width + x) * 3;
        self.pixels[base] = rgb[0];
        self.pixels[base + 1] = rgb[1];
        self.pixels[base + 2] = rgb[2];
    }

    /// Mirror around the vertical axis.
    pub fn hflip(&self) -> ImageSample {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(y, self.width - 1 - x, self.pixel(y, x));
            }
        }
        out
    }
}

/// Per-pixel class ids in {0..C-1} plus IGNORE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMap {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u8>,
    pub num_classes: usize,
}

impl SegMap {
    pub fn new(height: usize, width: usize, labels: Vec<u8>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig(format!("num_classes {num_classes} < 2")));
        }
        if num_classes > IGNORE as usize {
            return Err(Error::InvalidConfig(format!(
                "num_classes {num_classes} collides with the ignore index {IGNORE}"
            )));
        }
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch {
                context: "SegMap::new",
                expected: format!("{}x{} = {}", height, width, height * width),
                got: format!("{}", labels.len()),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l != IGNORE && l as usize >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label value {bad} outside 0..{num_classes} and not the ignore index"
            )));
        }
        Ok(SegMap { height, width, labels, num_classes })
    }

    pub fn filled(height: usize, width: usize, value: u8, num_classes: usize) -> Self {
        SegMap { height, width, labels: vec![value; height * width], num_classes }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: u8) {
        self.labels[y * self.width + x] = value;
    }

    pub fn hflip(&self) -> SegMap {
        let mut out = self.clone();
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, self.width - 1 - x, self.get(y, x));
            }
        }
        out
    }

    pub fn same_shape(&self, other: &SegMap) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Teacher prediction with confidence gating. Pixels below the confidence
/// threshold carry IGNORE in `labels` and `false` in `keep`.
#[derive(Debug, Clone)]
pub struct PseudoLabel {
    pub labels: SegMap,
    pub keep: Vec<bool>,
    pub confidence: Vec<f32>,
}

impl PseudoLabel {
    /// Build from raw argmax labels and per-pixel max-probabilities by
    /// applying the keep threshold `rho`.
    pub fn from_confidence(
        mut labels: SegMap,
        confidence: Vec<f32>,
        rho: f32,
    ) -> Result<Self> {
        if confidence.len() != labels.labels.len() {
            return Err(Error::ShapeMismatch {
                context: "PseudoLabel::from_confidence",
                expected: format!("{}", labels.labels.len()),
                got: format!("{}", confidence.len()),
            });
        }
        let keep: Vec<bool> = confidence.iter().map(|&c| c >= rho).collect();
        for (label, &kept) in labels.labels.iter_mut().zip(keep.iter()) {
            if !kept {
                *label = IGNORE;
            }
        }
        Ok(PseudoLabel { labels, keep, confidence })
    }

    pub fn kept_fraction(&self) -> f64 {
        if self.keep.is_empty() {
            return 0.0;
        }
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }

    pub fn hflip(&self) -> PseudoLabel {
        let (h, w) = (self.labels.height, self.labels.width);
        let mut keep = self.keep.clone();
        let mut confidence = self.confidence.clone();
        for y in 0..h {
            for x in 0..w {
                keep[y * w + (w - 1 - x)] = self.keep[y * w + x];
                confidence[y * w + (w - 1 - x)] = self.confidence[y * w + x];
            }
        }
        PseudoLabel { labels: self.labels.hflip(), keep, confidence }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageSample::new(1, 1, vec![0.0, 0.5, 1.1], DomainTag::Source).is_err());
    }

    #[test]
    fn rejects_label_at_or_above_class_count() {
        assert!(SegMap::new(1, 2, vec![0, 3], 3).is_err());
        assert!(SegMap::new(1, 2, vec![0, IGNORE], 3).is_ok());
    }

    #[test]
    fn pseudo_label_threshold_gates_labels() {
        let labels = SegMap::new(1, 3, vec![0, 1, 2], 3).unwrap();
        let pl = PseudoLabel::from_confidence(labels, vec![0.99, 0.5, 0.97], 0.968).unwrap();
        assert_eq!(pl.labels.labels, vec![0, IGNORE, 2]);
        assert_eq!(pl.keep, vec![true, false, true]);
        assert!((pl.kept_fraction() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hflip_is_involution() {
        let img = ImageSample::new(
            2,
            2,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.0, 0.5],
            DomainTag::Target,
        )
        .unwrap();
        assert_eq!(img.hflip().hflip(), img);
    }
}
