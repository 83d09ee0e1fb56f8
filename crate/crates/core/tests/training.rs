//! End-to-end invariants of the training engine on the synthetic world.

use adaseg_core::config::{MaskingMode, RunKind, TrainConfig};
use adaseg_core::data::{generate_toy_world, DomainSplits, ToyWorldSpec};
use adaseg_core::model::EncoderCfg;
use adaseg_core::uda::{train, train_step, TrainEvent, TrainRun, TrainState};

fn small_world() -> DomainSplits {
    let spec = ToyWorldSpec { n_train: 48, n_val: 8, seed: 11, ..Default::default() };
    generate_toy_world(&spec).unwrap()
}

fn toy_cfg(total: usize, run_kind: RunKind) -> TrainConfig {
    TrainConfig {
        total_iters: total,
        warmup_iters: (total / 10).max(1).min(total.saturating_sub(1).max(1)),
        batch_size: 2,
        lr_decoder: 1e-3,
        lr_encoder: 1e-3,
        run_kind,
        seed: 5,
        ..Default::default()
    }
}

fn batches<'a>(
    world: &'a DomainSplits,
    n: usize,
) -> (Vec<(&'a adaseg_core::ImageSample, &'a adaseg_core::SegMap)>, Vec<&'a adaseg_core::ImageSample>)
{
    let labeled: Vec<_> = (0..n).map(|i| world.source.pair(i).unwrap()).collect();
    let unlabeled: Vec<_> = (0..n).map(|i| world.target_train.image(i)).collect();
    (labeled, unlabeled)
}

#[test]
fn teacher_receives_no_gradients_over_a_hundred_steps() {
    let world = small_world();
    let cfg = toy_cfg(110, RunKind::Uda);
    let mut state: TrainState<f32> =
        TrainState::new(&cfg, EncoderCfg::toy(), world.source.num_classes).unwrap();
    let (labeled, unlabeled) = batches(&world, 2);
    for _ in 0..100 {
        train_step(&mut state, &labeled, &unlabeled).unwrap();
    }
    assert_eq!(state.teacher.store.max_abs_grad(), 0.0);
    // And the fd reference, when present, is equally untouched.
    assert_eq!(state.step, 100);
}

#[test]
fn teacher_after_one_step_is_the_exact_ema_of_old_and_new() {
    let world = small_world();
    let cfg = toy_cfg(10, RunKind::Uda);
    let mut state: TrainState<f64> =
        TrainState::new(&cfg, EncoderCfg::toy(), world.source.num_classes).unwrap();
    let old_teacher: Vec<Vec<f64>> =
        state.teacher.store.iter().map(|v| v.value.data().to_vec()).collect();
    let (labeled, unlabeled) = batches(&world, 2);
    train_step(&mut state, &labeled, &unlabeled).unwrap();
    for ((t, s), old) in
        state.teacher.store.iter().zip(state.student.store.iter()).zip(old_teacher.iter())
    {
        for ((tv, sv), ov) in t.value.data().iter().zip(s.value.data().iter()).zip(old.iter()) {
            let expect = 0.999 * ov + 0.001 * sv;
            assert!((tv - expect).abs() < 1e-15, "teacher EMA mismatch");
        }
    }
}

#[test]
fn constant_student_teacher_follows_the_closed_form() {
    // Freeze the student (lr 0 via no optimizer steps) and run the EMA
    // directly; after n steps t_n = a^n t0 + (1 - a^n) s exactly.
    let cfg = toy_cfg(10, RunKind::Uda);
    let state: TrainState<f64> = TrainState::new(&cfg, EncoderCfg::toy(), 5).unwrap();
    let mut teacher = state.teacher.store.clone();
    let mut student = state.student.store.clone();
    for var in student.iter_mut() {
        for v in var.value.data_mut() {
            *v += 0.25;
        }
    }
    let alpha = 0.999;
    let n = 1000;
    for _ in 0..n {
        adaseg_core::uda::ema_update(&mut teacher, &student, alpha).unwrap();
    }
    let an = libm::pow(alpha, n as f64);
    for (t, (t0, s)) in
        teacher.iter().zip(state.teacher.store.iter().zip(student.iter()))
    {
        for (tv, (t0v, sv)) in
            t.value.data().iter().zip(t0.value.data().iter().zip(s.value.data().iter()))
        {
            let expect = an * t0v + (1.0 - an) * sv;
            assert!(
                (tv - expect).abs() < 1e-12,
                "closed form violated: {tv} vs {expect}"
            );
        }
    }
}

#[test]
fn weight_zero_target_branch_equals_supervised_training() {
    let world = small_world();
    let steps = 5;

    let uda_cfg = TrainConfig {
        target_loss_weight: 0.0,
        masking: MaskingMode::Off,
        use_fd: false,
        use_hrda: false,
        ..toy_cfg(steps, RunKind::Uda)
    };
    let baseline_cfg = TrainConfig { run_kind: RunKind::Baseline, ..uda_cfg.clone() };

    let run_uda = TrainRun {
        cfg: &uda_cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.source,
        unlabeled: Some(&world.target_train),
        val: None,
    };
    let run_base = TrainRun {
        cfg: &baseline_cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.source,
        unlabeled: None,
        val: None,
    };
    let a: TrainState<f32> = train(&run_uda, |_| {}).unwrap();
    let b: TrainState<f32> = train(&run_base, |_| {}).unwrap();
    for (va, vb) in a.student.store.iter().zip(b.student.store.iter()) {
        assert_eq!(va.value.data(), vb.value.data(), "weights diverged at `{}`", va.name);
    }
}

#[test]
fn identical_seeds_give_identical_metric_streams() {
    let world = small_world();
    let cfg = toy_cfg(8, RunKind::Uda);
    let run = TrainRun {
        cfg: &cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.source,
        unlabeled: Some(&world.target_train),
        val: Some(&world.target_val),
    };
    let collect = || {
        let mut log = Vec::new();
        let _state: TrainState<f32> = train(&run, |e| {
            if let TrainEvent::Step(m) = e {
                log.push(m.clone());
            }
        })
        .unwrap();
        log
    };
    let a = collect();
    let b = collect();
    assert_eq!(a, b);
}

#[test]
fn zero_iterations_returns_the_initialized_model() {
    let world = small_world();
    let cfg = TrainConfig { total_iters: 0, warmup_iters: 0, ..toy_cfg(10, RunKind::Baseline) };
    let run = TrainRun {
        cfg: &cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.source,
        unlabeled: None,
        val: None,
    };
    let state: TrainState<f32> = train(&run, |_| {}).unwrap();
    let fresh =
        adaseg_core::model::SegModel::<f32>::new(EncoderCfg::toy(), 5, false, cfg.seed).unwrap();
    for (a, b) in state.student.store.iter().zip(fresh.store.iter()) {
        assert_eq!(a.value.data(), b.value.data());
    }
    assert_eq!(state.step, 0);
}

#[test]
fn evaluation_splits_cannot_feed_training() {
    let world = small_world();
    let cfg = toy_cfg(4, RunKind::Uda);
    // Pointing the self-training sampler at the out-of-target validation
    // split must abort.
    let run = TrainRun {
        cfg: &cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.source,
        unlabeled: Some(&world.out_of_target_val),
        val: None,
    };
    let result: adaseg_core::Result<TrainState<f32>> = train(&run, |_| {});
    assert!(matches!(result, Err(adaseg_core::Error::DataLeakage(_))));

    // Same for the labeled side.
    let run = TrainRun {
        cfg: &cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.target_val,
        unlabeled: None,
        val: None,
    };
    let result: adaseg_core::Result<TrainState<f32>> = train(&run, |_| {});
    assert!(matches!(result, Err(adaseg_core::Error::DataLeakage(_))));
}

#[test]
fn fd_loss_is_zero_at_init_and_positive_after_a_step() {
    let world = small_world();
    let cfg = TrainConfig { use_fd: true, ..toy_cfg(10, RunKind::Uda) };
    let mut state: TrainState<f32> =
        TrainState::new(&cfg, EncoderCfg::toy(), world.source.num_classes).unwrap();

    let probe = world.target_val.image(0);
    let reference = state.fd_reference.as_ref().unwrap();
    let (ref_tokens, _) =
        reference.encoder.encode(&reference.store, probe, None).unwrap();
    let (student_tokens, _) =
        state.student.encoder.encode(&state.student.store, probe, None).unwrap();
    let at_init =
        adaseg_core::uda::loss_fd(&student_tokens, &ref_tokens, cfg.fd_weight).unwrap();
    assert_eq!(at_init, 0.0);

    let (labeled, unlabeled) = batches(&world, 2);
    let metrics = train_step(&mut state, &labeled, &unlabeled).unwrap();
    assert_eq!(metrics.loss_fd, 0.0, "fd loss must be zero on the very first step");
    // The first step runs at a zero learning-rate multiplier (warmup starts
    // at zero), so step again until the weights actually move.
    for _ in 0..3 {
        train_step(&mut state, &labeled, &unlabeled).unwrap();
    }

    let (student_tokens, _) =
        state.student.encoder.encode(&state.student.store, probe, None).unwrap();
    let reference = state.fd_reference.as_ref().unwrap();
    let (ref_tokens_again, _) =
        reference.encoder.encode(&reference.store, probe, None).unwrap();
    // Frozen reference: byte-identical across calls.
    assert_eq!(ref_tokens.tokens, ref_tokens_again.tokens);
    let after =
        adaseg_core::uda::loss_fd(&student_tokens, &ref_tokens_again, cfg.fd_weight).unwrap();
    assert!(after > 0.0, "fd loss after an update: {after}");
}

#[test]
fn source_loss_decreases_over_early_training() {
    let world = small_world();
    let cfg = TrainConfig { val_interval: 0, ..toy_cfg(200, RunKind::Uda) };
    let run = TrainRun {
        cfg: &cfg,
        enc_cfg: EncoderCfg::toy(),
        labeled: &world.source,
        unlabeled: Some(&world.target_train),
        val: None,
    };
    let mut losses = Vec::new();
    let _state: TrainState<f32> = train(&run, |e| {
        if let TrainEvent::Step(m) = e {
            losses.push(m.loss_source);
        }
    })
    .unwrap();
    let head: f64 = losses[..50].iter().sum::<f64>() / 50.0;
    let tail: f64 = losses[150..].iter().sum::<f64>() / 50.0;
    assert!(
        tail < head,
        "source loss moving average did not decrease: first 50 {head:.4}, last 50 {tail:.4}"
    );
}
