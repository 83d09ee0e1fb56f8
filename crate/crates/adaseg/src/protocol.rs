//! Protocol driver: the baseline / self-training / oracle comparison with
//! table output, optionally running the independent trainings on threads.

use adaseg_core::config::{RunKind, TrainConfig};
use adaseg_core::data::DomainSplits;
use adaseg_core::eval::{evaluate, train_run_kind, ProtocolResult, ProtocolRow};
use adaseg_core::model::EncoderCfg;
use adaseg_core::uda::TrainState;

use crate::config_file::{fingerprint, FullConfig};
use crate::Result;

/// Same contract as the sequential protocol, with the four trainings run
/// concurrently. Each run is independently seeded, so the result is
/// identical to the sequential one.
pub fn run_protocol_parallel(
    cfg: &TrainConfig,
    enc_cfg: &EncoderCfg,
    splits: &DomainSplits,
) -> Result<ProtocolResult> {
    let kinds =
        [RunKind::Baseline, RunKind::Uda, RunKind::Oracle, RunKind::OracleOutOfTarget];
    let mut states: Vec<Option<adaseg_core::Result<TrainState<f32>>>> =
        kinds.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for kind in kinds {
            handles.push(scope.spawn(move || train_run_kind::<f32>(kind, cfg, enc_cfg, splits)));
        }
        for (slot, handle) in states.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("training thread panicked"));
        }
    });
    let mut it = states.into_iter().map(|s| s.expect("thread result recorded"));
    let baseline = it.next().unwrap()?;
    let uda = it.next().unwrap()?;
    let oracle = it.next().unwrap()?;
    let oracle_oot = it.next().unwrap()?;

    let rows = vec![
        ProtocolRow {
            run_kind: RunKind::Baseline,
            in_target: evaluate(&baseline.student, &splits.target_val)?,
            out_of_target: evaluate(&baseline.student, &splits.out_of_target_val)?,
        },
        ProtocolRow {
            run_kind: RunKind::Uda,
            in_target: evaluate(&uda.student, &splits.target_val)?,
            out_of_target: evaluate(&uda.student, &splits.out_of_target_val)?,
        },
        ProtocolRow {
            run_kind: RunKind::Oracle,
            in_target: evaluate(&oracle.student, &splits.target_val)?,
            out_of_target: evaluate(&oracle_oot.student, &splits.out_of_target_val)?,
        },
    ];
    Ok(ProtocolResult {
        rows,
        config_fingerprint: format!(
            "seed={} iters={} batch={}",
            cfg.seed, cfg.total_iters, cfg.batch_size
        ),
    })
}

/// Aligned plain-text table, one row per run kind.
pub fn format_protocol_table(result: &ProtocolResult) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10}  {:>16}  {:>20}\n",
        "run", "in-target mIoU", "out-of-target mIoU"
    ));
    for row in &result.rows {
        out.push_str(&format!(
            "{:<10}  {:>16.4}  {:>20.4}\n",
            row.run_kind.as_str(),
            row.in_target.miou,
            row.out_of_target.miou
        ));
    }
    out
}

/// Structured key-value document for the same result.
pub fn protocol_document(result: &ProtocolResult, cfg: &FullConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("protocol.fingerprint = {}\n", fingerprint(cfg)));
    out.push_str(&format!("protocol.budget = {}\n", result.config_fingerprint));
    for row in &result.rows {
        let kind = row.run_kind.as_str();
        out.push_str(&format!("protocol.{kind}.in_target.miou = {}\n", row.in_target.miou));
        out.push_str(&format!(
            "protocol.{kind}.out_of_target.miou = {}\n",
            row.out_of_target.miou
        ));
    }
    out
}
