//! Synthetic shape-world benchmark: colored shapes on a textured background,
//! rendered identically across domains except for a configurable photometric
//! shift (hue rotation, brightness, noise). Labels come straight from the
//! rasterizer, so they are pixel-exact in every domain.

use alloc::format;
use alloc::vec::Vec;

use crate::domain::{DomainTag, ImageSample, SegMap};
use crate::error::Error;
use crate::rng::Rng;
use crate::Result;

use super::dataset::{DatasetHandle, DatasetRole};

/// Photometric difference between domains. Geometry is never shifted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainShift {
    /// Rotation of RGB values around the gray axis, radians.
    pub hue_rotation: f64,
    /// Additive brightness offset.
    pub brightness: f64,
    /// Amplitude of per-pixel uniform noise.
    pub noise: f64,
}

impl DomainShift {
    pub const NONE: DomainShift = DomainShift { hue_rotation: 0.0, brightness: 0.0, noise: 0.0 };
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyWorldSpec {
    pub image_size: usize,
    /// Background plus up to four shape classes.
    pub class_count: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub patch_size: usize,
    pub source_shift: DomainShift,
    pub target_shift: DomainShift,
    pub out_of_target_shift: DomainShift,
    pub seed: u64,
}

impl Default for ToyWorldSpec {
    fn default() -> Self {
        ToyWorldSpec {
            image_size: 64,
            class_count: 5,
            n_train: 500,
            n_val: 64,
            patch_size: 8,
            source_shift: DomainShift::NONE,
            target_shift: DomainShift { hue_rotation: 1.1, brightness: -0.10, noise: 0.05 },
            out_of_target_shift: DomainShift { hue_rotation: -0.9, brightness: 0.12, noise: 0.07 },
            seed: 0,
        }
    }
}

impl ToyWorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || self.image_size % self.patch_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_size {} is not a positive multiple of patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if !(2..=5).contains(&self.class_count) {
            return Err(Error::InvalidConfig(format!(
                "class_count {} outside 2..=5",
                self.class_count
            )));
        }
        if self.n_train == 0 || self.n_val == 0 {
            return Err(Error::InvalidConfig("n_train and n_val must be positive".into()));
        }
        Ok(())
    }
}

/// The six-way split bundle the evaluation protocol consumes: labeled
/// source, unlabeled target train (with a labeled twin for oracle training
/// only), and the validation splits. The synthetic generator fills all of
/// them; directory-backed data can assemble the same bundle.

#[derive(Debug, Clone)]
pub struct DomainSplits {
    pub source: DatasetHandle,
    pub target_train: DatasetHandle,
    pub target_train_labeled: DatasetHandle,
    pub target_val: DatasetHandle,
    pub out_of_target_train: DatasetHandle,
    pub out_of_target_val: DatasetHandle,
}

const BG_COLOR: [f64; 3] = [0.42, 0.45, 0.40];
const SHAPE_COLORS: [[f64; 3]; 4] = [
    [0.85, 0.22, 0.18], // circle
    [0.20, 0.75, 0.30], // square
    [0.25, 0.35, 0.85], // triangle
    [0.85, 0.80, 0.22], // bar
];

struct Placed {
    cx: f64,
    cy: f64,
    radius: f64,
    class: u8,
    color: [f64; 3],
}

fn rotate_hue(rgb: [f64; 3], theta: f64) -> [f64; 3] {
    // Rotation around the gray axis (1,1,1)/sqrt(3).
    let c = libm::cos(theta);
    let s = libm::sin(theta);
    let a = (1.0 - c) / 3.0;
    let b = s / libm::sqrt(3.0);
    let m = [
        [c + a, a - b, a + b],
        [a + b, c + a, a - b],
        [a - b, a + b, c + a],
    ];
    let mut out = [0.0; 3];
    for (i, row) in m.iter().enumerate() {
        out[i] = row[0] * rgb[0] + row[1] * rgb[1] + row[2] * rgb[2];
    }
    out
}

#[inline]
fn clamp01(v: f64) -> f32 {
    v.clamp(0.0, 1.0) as f32
}

fn inside(shape: &Placed, x: f64, y: f64) -> bool {
    let dx = x - shape.cx;
    let dy = y - shape.cy;
    let r = shape.radius;
    match shape.class {
        1 => dx * dx + dy * dy <= r * r,
        2 => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
        3 => {
            // Upward triangle: apex (0,-r), base corners (±0.95r, +0.75r).
            let (ax, ay) = (0.0, -r);
            let (bx, by) = (-0.95 * r, 0.75 * r);
            let (cx2, cy2) = (0.95 * r, 0.75 * r);
            let sign = |x1: f64, y1: f64, x2: f64, y2: f64, px: f64, py: f64| {
                (px - x2) * (y1 - y2) - (x1 - x2) * (py - y2)
            };
            let d1 = sign(ax, ay, bx, by, dx, dy);
            let d2 = sign(bx, by, cx2, cy2, dx, dy);
            let d3 = sign(cx2, cy2, ax, ay, dx, dy);
            let has_neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
            let has_pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
            !(has_neg && has_pos)
        }
        4 => dx.abs() <= r && dy.abs() <= 0.35 * r,
        _ => false,
    }
}

fn render_sample(
    rng: &mut Rng,
    spec: &ToyWorldSpec,
    shift: &DomainShift,
    domain: DomainTag,
) -> (ImageSample, SegMap) {
    let size = spec.image_size;
    let shape_classes = spec.class_count - 1;
    let bg_jitter = [
        BG_COLOR[0] + rng.uniform_in(-0.03, 0.03),
        BG_COLOR[1] + rng.uniform_in(-0.03, 0.03),
        BG_COLOR[2] + rng.uniform_in(-0.03, 0.03),
    ];

    // Place 2..=4 non-overlapping shapes by rejection.
    let n_shapes = 2 + rng.below(3);
    let mut placed: Vec<Placed> = Vec::new();
    for _ in 0..n_shapes {
        for _attempt in 0..40 {
            let class = 1 + rng.below(shape_classes) as u8;
            let radius = rng.uniform_in(0.10, 0.17) * size as f64;
            let margin = radius + 1.0;
            let cx = rng.uniform_in(margin, size as f64 - margin);
            let cy = rng.uniform_in(margin, size as f64 - margin);
            let overlaps = placed.iter().any(|p| {
                let dx = p.cx - cx;
                let dy = p.cy - cy;
                libm::sqrt(dx * dx + dy * dy) < p.radius + radius + 2.0
            });
            if overlaps {
                continue;
            }
            let base = SHAPE_COLORS[(class - 1) as usize];
            let color = [
                base[0] + rng.uniform_in(-0.06, 0.06),
                base[1] + rng.uniform_in(-0.06, 0.06),
                base[2] + rng.uniform_in(-0.06, 0.06),
            ];
            placed.push(Placed { cx, cy, radius, class, color });
            break;
        }
    }

    let mut pixels = Vec::with_capacity(size * size * 3);
    let mut labels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut rgb = bg_jitter;
            let mut label = 0u8;
            for p in &placed {
                if inside(p, px, py) {
                    rgb = p.color;
                    label = p.class;
                    break;
                }
            }
            let mut rgb = rotate_hue(rgb, shift.hue_rotation);
            for v in rgb.iter_mut() {
                *v += shift.brightness + shift.noise * rng.uniform_in(-1.0, 1.0);
            }
            pixels.push(clamp01(rgb[0]));
            pixels.push(clamp01(rgb[1]));
            pixels.push(clamp01(rgb[2]));
            labels.push(label);
        }
    }
    let image = ImageSample { height: size, width: size, pixels, domain };
    let seg = SegMap { height: size, width: size, labels, num_classes: spec.class_count };
    (image, seg)
}

fn render_split(
    rng: &Rng,
    spec: &ToyWorldSpec,
    shift: &DomainShift,
    domain: DomainTag,
    stream: u64,
    count: usize,
) -> Vec<(ImageSample, SegMap)> {
    let mut rng = rng.fork(stream);
    (0..count).map(|_| render_sample(&mut rng, spec, shift, domain)).collect()
}

pub fn generate_toy_world(spec: &ToyWorldSpec) -> Result<DomainSplits> {
    spec.validate()?;
    let root = Rng::new(spec.seed).fork(0x746f79); // "toy"
    let c = spec.class_count;

    let source_pairs =
        render_split(&root, spec, &spec.source_shift, DomainTag::Source, 1, spec.n_train);
    let target_pairs =
        render_split(&root, spec, &spec.target_shift, DomainTag::Target, 2, spec.n_train);
    let target_val_pairs =
        render_split(&root, spec, &spec.target_shift, DomainTag::Target, 3, spec.n_val);
    let oot_pairs = render_split(
        &root,
        spec,
        &spec.out_of_target_shift,
        DomainTag::OutOfTarget,
        4,
        spec.n_train,
    );
    let oot_val_pairs = render_split(
        &root,
        spec,
        &spec.out_of_target_shift,
        DomainTag::OutOfTarget,
        5,
        spec.n_val,
    );

    let target_images: Vec<ImageSample> = target_pairs.iter().map(|(i, _)| i.clone()).collect();

    Ok(DomainSplits {
        source: DatasetHandle::new_labeled("toy_source", DatasetRole::SourceTrain, source_pairs, c)?,
        target_train: DatasetHandle::new_unlabeled(
            "toy_target_train",
            DatasetRole::TargetTrain,
            target_images,
            c,
        )?,
        target_train_labeled: DatasetHandle::new_labeled(
            "toy_target_train_labeled",
            DatasetRole::TargetTrainLabeled,
            target_pairs,
            c,
        )?,
        target_val: DatasetHandle::new_labeled(
            "toy_target_val",
            DatasetRole::TargetVal,
            target_val_pairs,
            c,
        )?,
        out_of_target_train: DatasetHandle::new_labeled(
            "toy_out_of_target_train",
            DatasetRole::OutOfTargetTrain,
            oot_pairs,
            c,
        )?,
        out_of_target_val: DatasetHandle::new_labeled(
            "toy_out_of_target_val",
            DatasetRole::OutOfTargetVal,
            oot_val_pairs,
            c,
        )?,
    })
}
