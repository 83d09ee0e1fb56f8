//! The student-teacher training engine: batch assembly, the per-step loss
//! stack, the optimizer update, and the EMA teacher refresh. Plain passes
//! run batched; the multi-resolution variant loops per image.

use alloc::format;
use alloc::vec::Vec;

use crate::config::{MaskingMode, RunKind, TrainConfig};
use crate::data::{dacs_mix, rare_class_weights, sample_source, DatasetHandle, DatasetRole};
use crate::domain::{ImageSample, SegMap};
use crate::error::Error;
use crate::eval::evaluate;
use crate::model::{apply_image_mask, sample_mask, CropBox, EncoderCfg, MaskPattern, SegModel};
use crate::nn::{cross_entropy_masked, mse, mse_backward};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::schedule::lr_multiplier;
use crate::Result;

use super::adamw::AdamW;
use super::ema::ema_update;
use super::pseudo::generate_pseudo_labels;

/// Everything recorded about one optimization step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: usize,
    pub loss_source: f64,
    pub loss_target: f64,
    pub loss_fd: f64,
    pub lr_multiplier: f64,
    /// Mean fraction of pseudo-label pixels kept across the target batch.
    pub kept_fraction: f64,
    pub val_miou: Option<f64>,
}

pub enum TrainEvent<'a, T: Scalar> {
    Step(&'a StepMetrics),
    Checkpoint { step: usize, state: &'a TrainState<T> },
}

pub struct TrainState<T: Scalar> {
    pub student: SegModel<T>,
    pub teacher: SegModel<T>,
    /// Frozen encoder for the feature-distance loss; a copy of the student
    /// at initialization, never updated.
    pub fd_reference: Option<SegModel<T>>,
    pub optimizer: AdamW<T>,
    pub cfg: TrainConfig,
    pub num_classes: usize,
    pub step: usize,
    rng_src: Rng,
    rng_tgt: Rng,
    rng_mask: Rng,
    rng_aug: Rng,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(cfg: &TrainConfig, enc_cfg: EncoderCfg, num_classes: usize) -> Result<Self> {
        cfg.validate()?;
        let student = SegModel::new(enc_cfg, num_classes, cfg.use_hrda, cfg.seed)?;
        let teacher = student.clone();
        let fd_reference = if cfg.use_fd { Some(student.clone()) } else { None };
        let optimizer = AdamW::new(&student.store, cfg);
        let root = Rng::new(cfg.seed);
        Ok(TrainState {
            student,
            teacher,
            fd_reference,
            optimizer,
            cfg: cfg.clone(),
            num_classes,
            step: 0,
            rng_src: root.fork(0x737263),  // "src"
            rng_tgt: root.fork(0x746774),  // "tgt"
            rng_mask: root.fork(0x6d736b), // "msk"
            rng_aug: root.fork(0x617567),  // "aug"
        })
    }

    fn target_branch_active(&self) -> bool {
        self.cfg.run_kind == RunKind::Uda && self.cfg.target_loss_weight > 0.0
    }
}

/// Brightness/contrast jitter, label-preserving, clamped back to [0,1].
fn apply_jitter(image: &mut ImageSample, rng: &mut Rng, amplitude: f64) {
    if amplitude <= 0.0 {
        return;
    }
    let brightness = rng.uniform_in(-amplitude, amplitude) as f32;
    let contrast = (1.0 + rng.uniform_in(-amplitude, amplitude)) as f32;
    for p in image.pixels.iter_mut() {
        *p = ((*p - 0.5) * contrast + 0.5 + brightness).clamp(0.0, 1.0);
    }
}

/// Random patch-aligned crop covering a quarter of the image area.
fn random_half_crop(rng: &mut Rng, height: usize, width: usize, patch: usize) -> CropBox {
    let ch = height / 2;
    let cw = width / 2;
    let choices_y = (height - ch) / patch + 1;
    let choices_x = (width - cw) / patch + 1;
    CropBox {
        y0: rng.below(choices_y) * patch,
        x0: rng.below(choices_x) * patch,
        height: ch,
        width: cw,
    }
}

/// Batched supervised pass: one stacked forward, cross-entropy over every
/// non-IGNORE pixel of the batch, optional feature-distance term sharing the
/// same encoder pass. Returns (ce_loss, fd_loss).
fn supervised_batched<T: Scalar>(
    state: &mut TrainState<T>,
    batch: &[(&ImageSample, &SegMap)],
) -> Result<(f64, f64)> {
    let c = state.num_classes;
    let images: Vec<&ImageSample> = batch.iter().map(|(i, _)| *i).collect();
    let masks: Vec<Option<&MaskPattern>> = alloc::vec![None; images.len()];
    let mut labels: Vec<u8> = Vec::with_capacity(images.len() * images[0].pixels.len() / 3);
    for (_, seg) in batch {
        labels.extend_from_slice(&seg.labels);
    }

    let student = &mut state.student;
    let (tokens, grid, enc_ctx) = student.encoder.encode_batch(&student.store, &images, &masks)?;
    let (logits, dec_ctx) = student.decoder.decode_batch(
        &student.store,
        &tokens,
        grid,
        student.encoder.cfg.patch_size,
        images.len(),
    )?;
    let ce = cross_entropy_masked(&logits, &labels, c);
    let mut dtokens = student.decoder.backward(&mut student.store, &dec_ctx, &ce.dlogits);

    let fd_loss = if let Some(reference) = &state.fd_reference {
        let (ref_tokens, _, _) =
            reference.encoder.encode_batch(&reference.store, &images, &masks)?;
        let fd = state.cfg.fd_weight * mse(&tokens, &ref_tokens);
        let mut dfd = mse_backward(&tokens, &ref_tokens);
        let scale = T::from_f64(state.cfg.fd_weight);
        for (a, b) in dtokens.iter_mut().zip(dfd.iter_mut()) {
            *a += *b * scale;
        }
        fd
    } else {
        0.0
    };
    student.encoder.backward(&mut student.store, &enc_ctx, &dtokens);
    Ok((ce.loss, fd_loss))
}

/// Per-image supervised pass through the multi-resolution head.
fn supervised_hrda<T: Scalar>(
    state: &mut TrainState<T>,
    image: &ImageSample,
    labels: &SegMap,
    weight: f64,
) -> Result<(f64, f64)> {
    let c = state.num_classes;
    let patch = state.student.encoder.cfg.patch_size;
    let crop = random_half_crop(&mut state.rng_aug, image.height, image.width, patch);
    let (fused, ctx) = state.student.forward_hrda(image, crop, None)?;
    let ce = cross_entropy_masked(&fused, &labels.labels, c);
    let mut dfused = ce.dlogits;
    for d in dfused.iter_mut() {
        *d *= T::from_f64(weight);
    }
    state.student.backward_hrda(&ctx, &dfused);

    let fd_loss = if let Some(reference) = &state.fd_reference {
        let student = &mut state.student;
        let (tokens, enc_ctx) = student.encoder.encode(&student.store, image, None)?;
        let (ref_tokens, _) = reference.encoder.encode(&reference.store, image, None)?;
        let fd = state.cfg.fd_weight * mse(&tokens.tokens, &ref_tokens.tokens);
        let mut dtokens = mse_backward(&tokens.tokens, &ref_tokens.tokens);
        let scale = T::from_f64(state.cfg.fd_weight * weight);
        for d in dtokens.iter_mut() {
            *d *= scale;
        }
        student.encoder.backward(&mut student.store, &enc_ctx, &dtokens);
        fd
    } else {
        0.0
    };
    Ok((ce.loss, fd_loss))
}

/// Per-image self-training pass through the multi-resolution head.
fn target_hrda<T: Scalar>(
    state: &mut TrainState<T>,
    image: &ImageSample,
    labels: &SegMap,
    weight: f64,
) -> Result<f64> {
    let c = state.num_classes;
    let patch = state.student.encoder.cfg.patch_size;
    let ratio = state.cfg.mask_ratio;
    let block = state.cfg.mask_block_size;

    let input = match state.cfg.masking {
        MaskingMode::Image => {
            let grid = (image.height / patch, image.width / patch);
            let m = sample_mask(&mut state.rng_mask, grid, ratio, block)?;
            apply_image_mask(image, &m, patch)
        }
        _ => image.clone(),
    };
    let crop = random_half_crop(&mut state.rng_aug, image.height, image.width, patch);
    let lr_grid = (image.height / 2 / patch, image.width / 2 / patch);
    let hr_grid = (crop.height / patch, crop.width / patch);
    let masks = match state.cfg.masking {
        MaskingMode::Token => Some((
            sample_mask(&mut state.rng_mask, lr_grid, ratio, block)?,
            sample_mask(&mut state.rng_mask, hr_grid, ratio, block)?,
        )),
        _ => None,
    };
    let mask_refs = masks.as_ref().map(|(a, b)| (a, b));
    let (fused, ctx) = state.student.forward_hrda(&input, crop, mask_refs)?;
    let ce = cross_entropy_masked(&fused, &labels.labels, c);
    let mut dfused = ce.dlogits;
    for d in dfused.iter_mut() {
        *d *= T::from_f64(weight);
    }
    state.student.backward_hrda(&ctx, &dfused);
    Ok(ce.loss)
}

/// One full optimization step over a labeled batch and (for the
/// self-training run kind) an unlabeled target batch.
pub fn train_step<T: Scalar>(
    state: &mut TrainState<T>,
    labeled_batch: &[(&ImageSample, &SegMap)],
    target_batch: &[&ImageSample],
) -> Result<StepMetrics> {
    if labeled_batch.is_empty() {
        return Err(Error::InvalidDataset("empty labeled batch".into()));
    }
    let cfg_alpha = state.cfg.alpha;
    let lr_mult = lr_multiplier(state.step, state.cfg.warmup_iters, state.cfg.total_iters)?;
    state.student.store.zero_grads();

    // Supervised branch.
    let (mut loss_source_total, mut loss_fd_total) = (0.0, 0.0);
    if state.cfg.use_hrda {
        let inv = 1.0 / labeled_batch.len() as f64;
        for (image, labels) in labeled_batch {
            let (ce, fd) = supervised_hrda(state, image, labels, inv)?;
            loss_source_total += ce * inv;
            loss_fd_total += fd * inv;
        }
    } else {
        let (ce, fd) = supervised_batched(state, labeled_batch)?;
        loss_source_total = ce;
        loss_fd_total = fd;
    }

    // Self-training branch on mixed target images.
    let mut loss_target_total = 0.0;
    let mut kept_sum = 0.0;
    let mut kept_count = 0usize;
    if state.target_branch_active() && !target_batch.is_empty() {
        let target_weight = state.cfg.target_loss_weight;
        let pseudos = generate_pseudo_labels(&state.teacher, target_batch, state.cfg.rho)?;

        // Compose the student's views: flip, class-mix from the paired
        // source sample, then photometric jitter. The teacher already saw
        // the clean images.
        let mut mixed: Vec<(ImageSample, SegMap)> = Vec::with_capacity(target_batch.len());
        for (i, (target_image, pseudo)) in target_batch.iter().zip(pseudos.into_iter()).enumerate()
        {
            kept_sum += pseudo.kept_fraction();
            kept_count += 1;
            let flip = state.rng_aug.coin(0.5);
            let (tgt_view, pseudo_view) =
                if flip { (target_image.hflip(), pseudo.hflip()) } else { ((*target_image).clone(), pseudo) };
            let (src_image, src_labels) = labeled_batch[i % labeled_batch.len()];
            let (mut mixed_image, mixed_labels) =
                dacs_mix(&mut state.rng_aug, src_image, src_labels, &tgt_view, &pseudo_view)?;
            let jitter = state.cfg.jitter;
            apply_jitter(&mut mixed_image, &mut state.rng_aug, jitter);
            mixed.push((mixed_image, mixed_labels));
        }

        if state.cfg.use_hrda {
            let inv = 1.0 / mixed.len() as f64;
            for (image, labels) in &mixed {
                let loss = target_hrda(state, image, labels, target_weight * inv)?;
                loss_target_total += loss * inv;
            }
            loss_target_total *= target_weight;
        } else {
            // Resolve masking, then one stacked pass over the whole batch.
            let patch = state.student.encoder.cfg.patch_size;
            let ratio = state.cfg.mask_ratio;
            let block = state.cfg.mask_block_size;
            let mut inputs: Vec<ImageSample> = Vec::with_capacity(mixed.len());
            let mut token_masks: Vec<Option<MaskPattern>> = Vec::with_capacity(mixed.len());
            for (image, _) in &mixed {
                let grid = (image.height / patch, image.width / patch);
                match state.cfg.masking {
                    MaskingMode::Off => {
                        inputs.push(image.clone());
                        token_masks.push(None);
                    }
                    MaskingMode::Token => {
                        inputs.push(image.clone());
                        token_masks.push(Some(sample_mask(&mut state.rng_mask, grid, ratio, block)?));
                    }
                    MaskingMode::Image => {
                        let m = sample_mask(&mut state.rng_mask, grid, ratio, block)?;
                        inputs.push(apply_image_mask(image, &m, patch));
                        token_masks.push(None);
                    }
                }
            }
            let image_refs: Vec<&ImageSample> = inputs.iter().collect();
            let mask_refs: Vec<Option<&MaskPattern>> =
                token_masks.iter().map(|m| m.as_ref()).collect();
            let mut labels: Vec<u8> = Vec::new();
            for (_, l) in &mixed {
                labels.extend_from_slice(&l.labels);
            }
            let (logits, ctx) = state.student.forward_batch(&image_refs, &mask_refs)?;
            let ce = cross_entropy_masked(&logits, &labels, state.num_classes);
            let mut dlogits = ce.dlogits;
            for d in dlogits.iter_mut() {
                *d *= T::from_f64(target_weight);
            }
            state.student.backward(&ctx, &dlogits);
            loss_target_total = ce.loss * target_weight;
        }
    }

    if !loss_source_total.is_finite() || !loss_target_total.is_finite() || !loss_fd_total.is_finite()
    {
        return Err(Error::NonFinite {
            term: if !loss_source_total.is_finite() {
                "loss_source"
            } else if !loss_target_total.is_finite() {
                "loss_target"
            } else {
                "loss_fd"
            },
            detail: format!(
                "step {}: loss_source {loss_source_total}, loss_target {loss_target_total}, loss_fd {loss_fd_total}",
                state.step
            ),
        });
    }

    state.optimizer.step(&mut state.student.store, lr_mult);
    ema_update(&mut state.teacher.store, &state.student.store, cfg_alpha)?;
    state.step += 1;

    Ok(StepMetrics {
        step: state.step,
        loss_source: loss_source_total,
        loss_target: loss_target_total,
        loss_fd: loss_fd_total,
        lr_multiplier: lr_mult,
        kept_fraction: if kept_count > 0 { kept_sum / kept_count as f64 } else { 0.0 },
        val_miou: None,
    })
}

/// A complete training run specification.
pub struct TrainRun<'a> {
    pub cfg: &'a TrainConfig,
    pub enc_cfg: EncoderCfg,
    pub labeled: &'a DatasetHandle,
    pub unlabeled: Option<&'a DatasetHandle>,
    pub val: Option<&'a DatasetHandle>,
}

/// Run the configured number of iterations. Deterministic given the seed:
/// two runs from the same config produce identical metrics sequences.
pub fn train<T: Scalar>(
    run: &TrainRun<'_>,
    mut on_event: impl FnMut(TrainEvent<'_, T>),
) -> Result<TrainState<T>> {
    let cfg = run.cfg;
    cfg.validate()?;
    run.labeled.guard_trainable()?;
    if !run.labeled.labeled {
        return Err(Error::InvalidDataset(format!(
            "training needs labels, but `{}` has none",
            run.labeled.name
        )));
    }
    if let Some(unlabeled) = run.unlabeled {
        unlabeled.guard_trainable()?;
        if unlabeled.role != DatasetRole::TargetTrain {
            return Err(Error::DataLeakage(format!(
                "self-training may only consume the target train split, got `{}` ({})",
                unlabeled.name,
                unlabeled.role.as_str()
            )));
        }
        if unlabeled.num_classes != run.labeled.num_classes {
            return Err(Error::ClassMismatch {
                expected: run.labeled.num_classes,
                got: unlabeled.num_classes,
            });
        }
    }

    let mut state = TrainState::<T>::new(cfg, run.enc_cfg.clone(), run.labeled.num_classes)?;
    let stats = run
        .labeled
        .stats()
        .ok_or_else(|| Error::InvalidDataset("labeled dataset lacks statistics".into()))?;
    let weights = rare_class_weights(&stats.class_pixel_freq, cfg.rcs_temperature)?;
    let target_active = state.target_branch_active() && run.unlabeled.is_some();

    for _ in 0..cfg.total_iters {
        let mut labeled_batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let (_, img, seg) = sample_source(&mut state.rng_src, run.labeled, &weights)?;
            labeled_batch.push((img, seg));
        }
        let mut target_batch: Vec<&ImageSample> = Vec::new();
        if target_active {
            let unlabeled = run.unlabeled.expect("target_active implies unlabeled");
            for _ in 0..cfg.batch_size {
                target_batch.push(unlabeled.image(state.rng_tgt.below(unlabeled.len())));
            }
        }

        let mut metrics = train_step(&mut state, &labeled_batch, &target_batch)?;
        let is_last = state.step == cfg.total_iters;
        if let Some(val) = run.val {
            let due = cfg.val_interval > 0 && state.step % cfg.val_interval == 0;
            if due || is_last {
                metrics.val_miou = Some(evaluate(&state.student, val)?.miou);
            }
        }
        on_event(TrainEvent::Step(&metrics));
        if cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0 && !is_last {
            on_event(TrainEvent::Checkpoint { step: state.step, state: &state });
        }
    }
    Ok(state)
}
