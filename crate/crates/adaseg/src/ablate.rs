//! Component ablation: the six-row grid over masking mode, feature
//! distance, and multi-resolution fusion, each scored on the target
//! validation split.

use adaseg_core::config::{MaskingMode, RunKind, TrainConfig};
use adaseg_core::data::DomainSplits;
use adaseg_core::eval::{evaluate, train_run_kind};
use adaseg_core::model::EncoderCfg;
use adaseg_core::uda::TrainState;

use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCell {
    pub label: &'static str,
    pub masking: MaskingMode,
    pub use_fd: bool,
    pub use_hrda: bool,
}

/// The grid, in presentation order.
pub const GRID: [AblationCell; 6] = [
    AblationCell {
        label: "self_training_only",
        masking: MaskingMode::Off,
        use_fd: false,
        use_hrda: false,
    },
    AblationCell {
        label: "image_masking",
        masking: MaskingMode::Image,
        use_fd: false,
        use_hrda: false,
    },
    AblationCell {
        label: "token_masking",
        masking: MaskingMode::Token,
        use_fd: false,
        use_hrda: false,
    },
    AblationCell {
        label: "token_masking_fd",
        masking: MaskingMode::Token,
        use_fd: true,
        use_hrda: false,
    },
    AblationCell {
        label: "token_masking_hrda",
        masking: MaskingMode::Token,
        use_fd: false,
        use_hrda: true,
    },
    AblationCell {
        label: "token_masking_fd_hrda",
        masking: MaskingMode::Token,
        use_fd: true,
        use_hrda: true,
    },
];

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub target_miou: f64,
}

fn cfg_for_cell(base: &TrainConfig, cell: &AblationCell) -> TrainConfig {
    TrainConfig {
        run_kind: RunKind::Uda,
        masking: cell.masking,
        use_fd: cell.use_fd,
        use_hrda: cell.use_hrda,
        ..base.clone()
    }
}

fn run_cell(
    base: &TrainConfig,
    enc_cfg: &EncoderCfg,
    splits: &DomainSplits,
    cell: &AblationCell,
) -> adaseg_core::Result<f64> {
    let cfg = cfg_for_cell(base, cell);
    let state: TrainState<f32> = train_run_kind(RunKind::Uda, &cfg, enc_cfg, splits)?;
    Ok(evaluate(&state.student, &splits.target_val)?.miou)
}

/// Run all six rows; rows are independent, so they execute on threads.
pub fn run_ablation(
    base: &TrainConfig,
    enc_cfg: &EncoderCfg,
    splits: &DomainSplits,
) -> Result<Vec<AblationRow>> {
    let mut scores: Vec<Option<adaseg_core::Result<f64>>> = GRID.iter().map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for cell in GRID.iter() {
            handles.push(scope.spawn(move || run_cell(base, enc_cfg, splits, cell)));
        }
        for (slot, handle) in scores.iter_mut().zip(handles) {
            *slot = Some(handle.join().expect("ablation thread panicked"));
        }
    });
    let mut rows = Vec::with_capacity(GRID.len());
    for (cell, score) in GRID.iter().zip(scores) {
        rows.push(AblationRow {
            cell: *cell,
            target_miou: score.expect("thread result recorded")?,
        });
    }
    Ok(rows)
}

pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<24} {:>8} {:>6} {:>6}  {:>14}\n",
        "configuration", "masking", "fd", "hrda", "target mIoU"
    ));
    for row in rows {
        out.push_str(&format!(
            "{:<24} {:>8} {:>6} {:>6}  {:>14.4}\n",
            row.cell.label,
            row.cell.masking.as_str(),
            row.cell.use_fd,
            row.cell.use_hrda,
            row.target_miou
        ));
    }
    out
}

pub fn ablation_document(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    for row in rows {
        out.push_str(&format!("ablation.{}.masking = {}\n", row.cell.label, row.cell.masking.as_str()));
        out.push_str(&format!("ablation.{}.use_fd = {}\n", row.cell.label, row.cell.use_fd));
        out.push_str(&format!("ablation.{}.use_hrda = {}\n", row.cell.label, row.cell.use_hrda));
        out.push_str(&format!("ablation.{}.target_miou = {}\n", row.cell.label, row.target_miou));
    }
    out
}
