//! Append-only, line-delimited training metrics.

use std::io::Write;
use std::path::Path;

use adaseg_core::uda::StepMetrics;

use crate::{io_err, Result};

/// One record per line; `val_miou` appears only on validation steps.
pub fn format_record(m: &StepMetrics) -> String {
    let mut line = format!(
        "step={} loss_source={} loss_target={} loss_fd={} lr_mult={} kept_fraction={}",
        m.step, m.loss_source, m.loss_target, m.loss_fd, m.lr_multiplier, m.kept_fraction
    );
    if let Some(v) = m.val_miou {
        line.push_str(&format!(" val_miou={v}"));
    }
    line
}

pub struct MetricsLog {
    writer: std::io::BufWriter<std::fs::File>,
    path: std::path::PathBuf,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let file = std::fs::File::create(path).map_err(io_err(path))?;
        Ok(MetricsLog { writer: std::io::BufWriter::new(file), path: path.into() })
    }

    pub fn append(&mut self, m: &StepMetrics) -> Result<()> {
        writeln!(self.writer, "{}", format_record(m)).map_err(io_err(&self.path))?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(io_err(&self.path))?;
        Ok(())
    }
}
