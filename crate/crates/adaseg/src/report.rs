//! Evaluation reports as human-readable key-value documents.

use std::path::Path;

use adaseg_core::metrics::EvalReport;

use crate::config_file::parse_document;
use crate::{io_err, AppError, Result};

pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("report.dataset = {}\n", report.dataset_tag));
    out.push_str(&format!("report.split = {}\n", report.split_tag));
    out.push_str(&format!("report.pixel_count = {}\n", report.pixel_count));
    out.push_str(&format!("report.miou = {}\n", report.miou));
    for (c, iou) in report.per_class_iou.iter().enumerate() {
        match iou {
            Some(v) => out.push_str(&format!("report.class_{c}.iou = {v}\n")),
            None => out.push_str(&format!("report.class_{c}.iou = undefined\n")),
        }
    }
    out
}

pub fn write_report(path: &Path, report: &EvalReport) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    std::fs::write(path, format_report(report)).map_err(io_err(path))?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let pairs = parse_document(&text)?;
    let get = |key: &str| -> Result<String> {
        pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.clone())
            .ok_or_else(|| AppError::Config(format!("report missing `{key}`")))
    };
    let miou: f64 = get("report.miou")?
        .parse()
        .map_err(|_| AppError::Config("report.miou is not a number".into()))?;
    let pixel_count: u64 = get("report.pixel_count")?
        .parse()
        .map_err(|_| AppError::Config("report.pixel_count is not an integer".into()))?;
    let mut per_class = Vec::new();
    loop {
        let key = format!("report.class_{}.iou", per_class.len());
        match pairs.iter().find(|(k, _)| *k == key) {
            Some((_, v)) if v == "undefined" => per_class.push(None),
            Some((_, v)) => per_class.push(Some(v.parse().map_err(|_| {
                AppError::Config(format!("`{key}` is not a number"))
            })?)),
            None => break,
        }
    }
    Ok(EvalReport {
        per_class_iou: per_class,
        miou,
        pixel_count,
        dataset_tag: get("report.dataset")?,
        split_tag: get("report.split")?,
    })
}
