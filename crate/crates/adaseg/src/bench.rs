//! Wall-clock inference latency: one-pass prediction versus the
//! multi-resolution three-pass scheme, measured per image with the timed
//! region covering only model work.

use std::cell::Cell;
use std::time::{Duration, Instant};

use adaseg_core::domain::{DomainTag, ImageSample};
use adaseg_core::model::{hrda_fuse, CropBox, SegModel};
use adaseg_core::rng::Rng;

use crate::{AppError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    SinglePass,
    HrdaMultipass,
}

impl BenchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMode::SinglePass => "single_pass",
            BenchMode::HrdaMultipass => "hrda_multipass",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "single_pass" => Ok(BenchMode::SinglePass),
            "hrda_multipass" => Ok(BenchMode::HrdaMultipass),
            other => Err(AppError::Config(format!("unknown bench mode `{other}`"))),
        }
    }
}

/// Something the harness can time. Implementations count their own forward
/// passes so the pass structure is asserted, not assumed.
pub trait BenchTarget {
    fn run(&self, mode: BenchMode, image: &ImageSample) -> Result<()>;
    fn supports(&self, mode: BenchMode) -> bool;
    /// Forward passes executed since the last call.
    fn take_pass_count(&self) -> usize;
    fn label(&self) -> String;
}

/// A real model. The multi-pass mode runs the low-resolution context pass,
/// the high-resolution crop pass, and the attention pass, each a full
/// backbone forward at the benchmark shape, then fuses.
pub struct ModelTarget {
    pub model: SegModel<f32>,
    passes: Cell<usize>,
}

impl ModelTarget {
    pub fn new(model: SegModel<f32>) -> Self {
        ModelTarget { model, passes: Cell::new(0) }
    }

    fn bump(&self) {
        self.passes.set(self.passes.get() + 1);
    }
}

impl BenchTarget for ModelTarget {
    fn run(&self, mode: BenchMode, image: &ImageSample) -> Result<()> {
        match mode {
            BenchMode::SinglePass => {
                let (_logits, _) = self.model.forward(image, None)?;
                self.bump();
            }
            BenchMode::HrdaMultipass => {
                let head = self.model.scale_attention.as_ref().ok_or_else(|| {
                    AppError::Config(
                        "hrda_multipass requires a model with the fusion head".into(),
                    )
                })?;
                let (h, w) = (image.height, image.width);
                let c = self.model.num_classes;
                // Low-resolution context pass.
                let (lr_logits, _) = self.model.forward(image, None)?;
                self.bump();
                // High-resolution crop pass at the same tensor shape.
                let (hr_logits, _) = self.model.forward(image, None)?;
                self.bump();
                // Scale-attention pass.
                let (tokens, _) = self.model.encoder.encode(&self.model.store, image, None)?;
                let (attn, _) = head.forward(&self.model.store, &tokens);
                self.bump();
                // Fuse into the double-resolution scene prediction.
                let crop = CropBox { y0: 0, x0: 0, height: h, width: w };
                let patch = self.model.encoder.cfg.patch_size;
                let (_fused, _) =
                    hrda_fuse(&lr_logits, (h, w), &attn, &hr_logits, crop, (2 * h, 2 * w), c, patch)?;
            }
        }
        Ok(())
    }

    fn supports(&self, mode: BenchMode) -> bool {
        match mode {
            BenchMode::SinglePass => true,
            BenchMode::HrdaMultipass => self.model.scale_attention.is_some(),
        }
    }

    fn take_pass_count(&self) -> usize {
        self.passes.replace(0)
    }

    fn label(&self) -> String {
        format!("model({} params)", self.model.param_count())
    }
}

/// Deterministic-cost stand-in: burns a fixed wall time per pass.
pub struct StubTarget {
    pub per_pass: Duration,
    passes: Cell<usize>,
}

impl StubTarget {
    pub fn new(per_pass: Duration) -> Self {
        StubTarget { per_pass, passes: Cell::new(0) }
    }

    fn one_pass(&self) {
        if !self.per_pass.is_zero() {
            let start = Instant::now();
            while start.elapsed() < self.per_pass {
                std::hint::spin_loop();
            }
        }
        self.passes.set(self.passes.get() + 1);
    }
}

impl BenchTarget for StubTarget {
    fn run(&self, mode: BenchMode, _image: &ImageSample) -> Result<()> {
        match mode {
            BenchMode::SinglePass => self.one_pass(),
            BenchMode::HrdaMultipass => {
                self.one_pass();
                self.one_pass();
                self.one_pass();
            }
        }
        Ok(())
    }

    fn supports(&self, _mode: BenchMode) -> bool {
        true
    }

    fn take_pass_count(&self) -> usize {
        self.passes.replace(0)
    }

    fn label(&self) -> String {
        format!("stub({:?}/pass)", self.per_pass)
    }
}

#[derive(Debug, Clone)]
pub struct LatencyReport {
    pub target: String,
    pub mode: BenchMode,
    pub input_shape: (usize, usize),
    pub batch_size: usize,
    pub warmup_runs: usize,
    pub times_ms: Vec<f64>,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub median_ms: f64,
    pub passes_per_image: usize,
}

fn probe_image(shape: (usize, usize)) -> ImageSample {
    let (h, w) = shape;
    let mut rng = Rng::new(0xbe5c);
    let pixels: Vec<f32> = (0..h * w * 3).map(|_| rng.uniform() as f32).collect();
    ImageSample { height: h, width: w, pixels, domain: DomainTag::Target }
}

/// Time `n_timed` runs after `n_warmup` discarded ones. Input construction
/// and statistics stay outside the timed region.
pub fn measure(
    target: &dyn BenchTarget,
    mode: BenchMode,
    shape: (usize, usize),
    n_warmup: usize,
    n_timed: usize,
) -> Result<LatencyReport> {
    if n_timed < 10 {
        return Err(AppError::Config(format!("need at least 10 timed runs, got {n_timed}")));
    }
    if !target.supports(mode) {
        return Err(AppError::Config(format!(
            "target `{}` does not support mode {}",
            target.label(),
            mode.as_str()
        )));
    }
    let image = probe_image(shape);
    for _ in 0..n_warmup {
        target.run(mode, &image)?;
    }
    target.take_pass_count();
    let mut times_ms = Vec::with_capacity(n_timed);
    for _ in 0..n_timed {
        let start = Instant::now();
        target.run(mode, &image)?;
        times_ms.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let total_passes = target.take_pass_count();
    let passes_per_image = total_passes / n_timed;

    let mean = times_ms.iter().sum::<f64>() / n_timed as f64;
    let var = times_ms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n_timed as f64;
    let mut sorted = times_ms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n_timed % 2 == 0 {
        0.5 * (sorted[n_timed / 2 - 1] + sorted[n_timed / 2])
    } else {
        sorted[n_timed / 2]
    };
    Ok(LatencyReport {
        target: target.label(),
        mode,
        input_shape: shape,
        batch_size: 1,
        warmup_runs: n_warmup,
        times_ms,
        mean_ms: mean,
        std_ms: var.sqrt(),
        median_ms: median,
        passes_per_image,
    })
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub faster: LatencyReport,
    pub slower: LatencyReport,
    /// mean(slower) / mean(faster); above 1 means the first argument wins.
    pub speedup: f64,
    /// Two-sigma interval from run variance.
    pub speedup_interval: (f64, f64),
    /// median(slower) / median(faster); robust to scheduler outliers.
    pub median_speedup: f64,
}

/// Speedup of target/mode `a` over target/mode `b` at the same shape.
pub fn compare(
    a: (&dyn BenchTarget, BenchMode),
    b: (&dyn BenchTarget, BenchMode),
    shape: (usize, usize),
    n_warmup: usize,
    n_timed: usize,
) -> Result<Comparison> {
    let report_a = measure(a.0, a.1, shape, n_warmup, n_timed)?;
    let report_b = measure(b.0, b.1, shape, n_warmup, n_timed)?;
    let ratio = report_b.mean_ms / report_a.mean_ms;
    let median_ratio = report_b.median_ms / report_a.median_ms;
    let n = n_timed as f64;
    let rel_a = report_a.std_ms / report_a.mean_ms / n.sqrt();
    let rel_b = report_b.std_ms / report_b.mean_ms / n.sqrt();
    let sigma = ratio * (rel_a * rel_a + rel_b * rel_b).sqrt();
    Ok(Comparison {
        faster: report_a,
        slower: report_b,
        speedup: ratio,
        speedup_interval: (ratio - 2.0 * sigma, ratio + 2.0 * sigma),
        median_speedup: median_ratio,
    })
}

pub fn format_report(r: &LatencyReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("bench.target = {}\n", r.target));
    out.push_str(&format!("bench.mode = {}\n", r.mode.as_str()));
    out.push_str(&format!("bench.input_shape = {}x{}\n", r.input_shape.0, r.input_shape.1));
    out.push_str(&format!("bench.batch_size = {}\n", r.batch_size));
    out.push_str(&format!("bench.warmup_runs = {}\n", r.warmup_runs));
    out.push_str(&format!("bench.timed_runs = {}\n", r.times_ms.len()));
    out.push_str(&format!("bench.passes_per_image = {}\n", r.passes_per_image));
    out.push_str(&format!("bench.mean_ms = {:.4}\n", r.mean_ms));
    out.push_str(&format!("bench.std_ms = {:.4}\n", r.std_ms));
    out.push_str(&format!("bench.median_ms = {:.4}\n", r.median_ms));
    out
}

/// Minimal two-bar comparison chart, written as a PNG.
pub fn write_bar_chart(path: &std::path::Path, cmp: &Comparison) -> Result<()> {
    let (w, h) = (320usize, 200usize);
    let mut pixels = vec![245u8; w * h * 3];
    let max_ms = cmp.faster.mean_ms.max(cmp.slower.mean_ms);
    let bars = [
        (60usize, cmp.faster.mean_ms, [66u8, 135, 245]),
        (190usize, cmp.slower.mean_ms, [235u8, 130, 60]),
    ];
    for (x0, value, color) in bars {
        let bar_h = ((value / max_ms) * 160.0).round() as usize;
        for y in (h - 20 - bar_h)..(h - 20) {
            for x in x0..(x0 + 70).min(w) {
                let idx = (y * w + x) * 3;
                pixels[idx..idx + 3].copy_from_slice(&color);
            }
        }
    }
    // Baseline axis.
    for x in 20..w - 20 {
        let idx = ((h - 20) * w + x) * 3;
        pixels[idx..idx + 3].copy_from_slice(&[40, 40, 40]);
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(crate::io_err(parent))?;
    }
    let file = std::fs::File::create(path).map_err(crate::io_err(path))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    enc.write_header()
        .and_then(|mut wr| wr.write_image_data(&pixels))
        .map_err(|e| AppError::Decode { path: path.into(), message: e.to_string() })?;
    Ok(())
}
