//! Flat `key = value` configuration files with dotted sections, plus the run
//! manifest. Resolution is total: every field has a default, every unknown
//! key is an error, and the emitted manifest parses back to the identical
//! configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use adaseg_core::config::{MaskingMode, RunKind, TrainConfig};
use adaseg_core::data::ToyWorldSpec;
use adaseg_core::model::EncoderCfg;

use crate::{io_err, AppError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DirectoryConfig {
    pub classes: usize,
    pub source_root: PathBuf,
    pub target_train_root: Option<PathBuf>,
    pub target_train_labeled_root: Option<PathBuf>,
    pub target_val_root: Option<PathBuf>,
    pub out_of_target_train_root: Option<PathBuf>,
    pub out_of_target_val_root: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataConfig {
    Toy(ToyWorldSpec),
    Directory(DirectoryConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullConfig {
    pub train: TrainConfig,
    pub encoder: EncoderCfg,
    pub data: DataConfig,
}

impl Default for FullConfig {
    fn default() -> Self {
        FullConfig {
            train: TrainConfig::default(),
            encoder: EncoderCfg::toy(),
            data: DataConfig::Toy(ToyWorldSpec::default()),
        }
    }
}

/// Ordered `key = value` pairs from one document.
pub fn parse_document(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(AppError::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse().map_err(|_| AppError::Config(format!("key `{key}`: `{v}` is not a number")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| AppError::Config(format!("key `{key}`: `{v}` is not an integer")))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| AppError::Config(format!("key `{key}`: `{v}` is not an integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(AppError::Config(format!("key `{key}`: `{v}` is not a boolean"))),
    }
}

fn parse_grid(key: &str, v: &str) -> Result<(usize, usize)> {
    let Some((a, b)) = v.split_once('x') else {
        return Err(AppError::Config(format!("key `{key}`: `{v}` is not like `8x8`")));
    };
    Ok((parse_usize(key, a.trim())?, parse_usize(key, b.trim())?))
}

/// Apply one key to the configuration. Unknown keys are errors; `manifest.*`
/// keys are informational and accepted so manifests can be re-used as
/// configs.
fn apply_key(cfg: &mut FullConfig, key: &str, value: &str) -> Result<()> {
    if key.starts_with("manifest.") {
        return Ok(());
    }
    let train = &mut cfg.train;
    match key {
        "train.alpha" => train.alpha = parse_f64(key, value)?,
        "train.rho" => train.rho = parse_f64(key, value)?,
        "train.mask_ratio" => train.mask_ratio = parse_f64(key, value)?,
        "train.mask_block_size" => train.mask_block_size = parse_usize(key, value)?,
        "train.lr_decoder" => train.lr_decoder = parse_f64(key, value)?,
        "train.lr_encoder" => train.lr_encoder = parse_f64(key, value)?,
        "train.total_iters" => train.total_iters = parse_usize(key, value)?,
        "train.warmup_iters" => train.warmup_iters = parse_usize(key, value)?,
        "train.batch_size" => train.batch_size = parse_usize(key, value)?,
        "train.rcs_temperature" => train.rcs_temperature = parse_f64(key, value)?,
        "train.masking" => train.masking = MaskingMode::parse(value)?,
        "train.use_fd" => train.use_fd = parse_bool(key, value)?,
        "train.use_hrda" => train.use_hrda = parse_bool(key, value)?,
        "train.fd_weight" => train.fd_weight = parse_f64(key, value)?,
        "train.target_loss_weight" => train.target_loss_weight = parse_f64(key, value)?,
        "train.jitter" => train.jitter = parse_f64(key, value)?,
        "train.weight_decay" => train.weight_decay = parse_f64(key, value)?,
        "train.adam_beta1" => train.adam_beta1 = parse_f64(key, value)?,
        "train.adam_beta2" => train.adam_beta2 = parse_f64(key, value)?,
        "train.run_kind" => train.run_kind = RunKind::parse(value)?,
        "train.val_interval" => train.val_interval = parse_usize(key, value)?,
        "train.checkpoint_interval" => train.checkpoint_interval = parse_usize(key, value)?,
        "train.seed" => train.seed = parse_u64(key, value)?,
        "model.patch_size" => cfg.encoder.patch_size = parse_usize(key, value)?,
        "model.dim" => cfg.encoder.dim = parse_usize(key, value)?,
        "model.depth" => cfg.encoder.depth = parse_usize(key, value)?,
        "model.heads" => cfg.encoder.heads = parse_usize(key, value)?,
        "model.mlp_ratio" => cfg.encoder.mlp_ratio = parse_usize(key, value)?,
        "model.base_grid" => cfg.encoder.base_grid = parse_grid(key, value)?,
        "data.kind" => match value {
            "toy" => {
                if !matches!(cfg.data, DataConfig::Toy(_)) {
                    cfg.data = DataConfig::Toy(ToyWorldSpec::default());
                }
            }
            "directory" => {
                if !matches!(cfg.data, DataConfig::Directory(_)) {
                    cfg.data = DataConfig::Directory(DirectoryConfig {
                        classes: 2,
                        source_root: PathBuf::new(),
                        target_train_root: None,
                        target_train_labeled_root: None,
                        target_val_root: None,
                        out_of_target_train_root: None,
                        out_of_target_val_root: None,
                    });
                }
            }
            other => {
                return Err(AppError::Config(format!(
                    "key `data.kind`: expected `toy` or `directory`, got `{other}`"
                )))
            }
        },
        _ if key.starts_with("data.toy.") => {
            let DataConfig::Toy(spec) = &mut cfg.data else {
                return Err(AppError::Config(format!(
                    "key `{key}` needs `data.kind = toy` first"
                )));
            };
            apply_toy_key(spec, key, value)?;
        }
        _ if key.starts_with("data.dir.") => {
            let DataConfig::Directory(dir) = &mut cfg.data else {
                return Err(AppError::Config(format!(
                    "key `{key}` needs `data.kind = directory` first"
                )));
            };
            apply_dir_key(dir, key, value)?;
        }
        _ => return Err(AppError::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

fn apply_toy_key(spec: &mut ToyWorldSpec, key: &str, value: &str) -> Result<()> {
    match key {
        "data.toy.image_size" => spec.image_size = parse_usize(key, value)?,
        "data.toy.class_count" => spec.class_count = parse_usize(key, value)?,
        "data.toy.n_train" => spec.n_train = parse_usize(key, value)?,
        "data.toy.n_val" => spec.n_val = parse_usize(key, value)?,
        "data.toy.seed" => spec.seed = parse_u64(key, value)?,
        "data.toy.source.hue" => spec.source_shift.hue_rotation = parse_f64(key, value)?,
        "data.toy.source.brightness" => spec.source_shift.brightness = parse_f64(key, value)?,
        "data.toy.source.noise" => spec.source_shift.noise = parse_f64(key, value)?,
        "data.toy.target.hue" => spec.target_shift.hue_rotation = parse_f64(key, value)?,
        "data.toy.target.brightness" => spec.target_shift.brightness = parse_f64(key, value)?,
        "data.toy.target.noise" => spec.target_shift.noise = parse_f64(key, value)?,
        "data.toy.out_of_target.hue" => {
            spec.out_of_target_shift.hue_rotation = parse_f64(key, value)?
        }
        "data.toy.out_of_target.brightness" => {
            spec.out_of_target_shift.brightness = parse_f64(key, value)?
        }
        "data.toy.out_of_target.noise" => spec.out_of_target_shift.noise = parse_f64(key, value)?,
        _ => return Err(AppError::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

fn apply_dir_key(dir: &mut DirectoryConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "data.dir.classes" => dir.classes = parse_usize(key, value)?,
        "data.dir.source_root" => dir.source_root = PathBuf::from(value),
        "data.dir.target_train_root" => dir.target_train_root = Some(PathBuf::from(value)),
        "data.dir.target_train_labeled_root" => {
            dir.target_train_labeled_root = Some(PathBuf::from(value))
        }
        "data.dir.target_val_root" => dir.target_val_root = Some(PathBuf::from(value)),
        "data.dir.out_of_target_train_root" => {
            dir.out_of_target_train_root = Some(PathBuf::from(value))
        }
        "data.dir.out_of_target_val_root" => {
            dir.out_of_target_val_root = Some(PathBuf::from(value))
        }
        _ => return Err(AppError::Config(format!("unknown config key `{key}`"))),
    }
    Ok(())
}

/// Resolve a document plus `--set` overrides into a full configuration.
/// Overrides win over file values; later keys win over earlier ones.
pub fn resolve(pairs: &[(String, String)], overrides: &[(String, String)]) -> Result<FullConfig> {
    let mut cfg = FullConfig::default();
    // data.kind must be applied before dependent keys regardless of where it
    // appears in the file.
    let all: Vec<&(String, String)> = pairs.iter().chain(overrides.iter()).collect();
    if let Some((k, v)) = all.iter().find(|(k, _)| k == "data.kind") {
        apply_key(&mut cfg, k, v)?;
    }
    for (k, v) in all {
        apply_key(&mut cfg, k, v)?;
    }
    // Keep the toy renderer aligned with the model's patch grid.
    if let DataConfig::Toy(spec) = &mut cfg.data {
        spec.patch_size = cfg.encoder.patch_size;
        spec.validate()?;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<FullConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let pairs = parse_document(&text)?;
    resolve(&pairs, overrides)
}

/// Parse `--set key=value` arguments.
pub fn parse_overrides(sets: &[String]) -> Result<Vec<(String, String)>> {
    sets.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| AppError::Config(format!("--set expects key=value, got `{s}`")))
        })
        .collect()
}

/// Emit the complete configuration; every field appears exactly once.
pub fn emit(cfg: &FullConfig) -> String {
    let mut out = String::new();
    let t = &cfg.train;
    let _ = writeln!(out, "train.alpha = {}", t.alpha);
    let _ = writeln!(out, "train.rho = {}", t.rho);
    let _ = writeln!(out, "train.mask_ratio = {}", t.mask_ratio);
    let _ = writeln!(out, "train.mask_block_size = {}", t.mask_block_size);
    let _ = writeln!(out, "train.lr_decoder = {}", t.lr_decoder);
    let _ = writeln!(out, "train.lr_encoder = {}", t.lr_encoder);
    let _ = writeln!(out, "train.total_iters = {}", t.total_iters);
    let _ = writeln!(out, "train.warmup_iters = {}", t.warmup_iters);
    let _ = writeln!(out, "train.batch_size = {}", t.batch_size);
    let _ = writeln!(out, "train.rcs_temperature = {}", t.rcs_temperature);
    let _ = writeln!(out, "train.masking = {}", t.masking.as_str());
    let _ = writeln!(out, "train.use_fd = {}", t.use_fd);
    let _ = writeln!(out, "train.use_hrda = {}", t.use_hrda);
    let _ = writeln!(out, "train.fd_weight = {}", t.fd_weight);
    let _ = writeln!(out, "train.target_loss_weight = {}", t.target_loss_weight);
    let _ = writeln!(out, "train.jitter = {}", t.jitter);
    let _ = writeln!(out, "train.weight_decay = {}", t.weight_decay);
    let _ = writeln!(out, "train.adam_beta1 = {}", t.adam_beta1);
    let _ = writeln!(out, "train.adam_beta2 = {}", t.adam_beta2);
    let _ = writeln!(out, "train.run_kind = {}", t.run_kind.as_str());
    let _ = writeln!(out, "train.val_interval = {}", t.val_interval);
    let _ = writeln!(out, "train.checkpoint_interval = {}", t.checkpoint_interval);
    let _ = writeln!(out, "train.seed = {}", t.seed);
    let e = &cfg.encoder;
    let _ = writeln!(out, "model.patch_size = {}", e.patch_size);
    let _ = writeln!(out, "model.dim = {}", e.dim);
    let _ = writeln!(out, "model.depth = {}", e.depth);
    let _ = writeln!(out, "model.heads = {}", e.heads);
    let _ = writeln!(out, "model.mlp_ratio = {}", e.mlp_ratio);
    let _ = writeln!(out, "model.base_grid = {}x{}", e.base_grid.0, e.base_grid.1);
    match &cfg.data {
        DataConfig::Toy(s) => {
            let _ = writeln!(out, "data.kind = toy");
            let _ = writeln!(out, "data.toy.image_size = {}", s.image_size);
            let _ = writeln!(out, "data.toy.class_count = {}", s.class_count);
            let _ = writeln!(out, "data.toy.n_train = {}", s.n_train);
            let _ = writeln!(out, "data.toy.n_val = {}", s.n_val);
            let _ = writeln!(out, "data.toy.seed = {}", s.seed);
            for (name, shift) in [
                ("source", &s.source_shift),
                ("target", &s.target_shift),
                ("out_of_target", &s.out_of_target_shift),
            ] {
                let _ = writeln!(out, "data.toy.{name}.hue = {}", shift.hue_rotation);
                let _ = writeln!(out, "data.toy.{name}.brightness = {}", shift.brightness);
                let _ = writeln!(out, "data.toy.{name}.noise = {}", shift.noise);
            }
        }
        DataConfig::Directory(d) => {
            let _ = writeln!(out, "data.kind = directory");
            let _ = writeln!(out, "data.dir.classes = {}", d.classes);
            let _ = writeln!(out, "data.dir.source_root = {}", d.source_root.display());
            let optional = [
                ("target_train_root", &d.target_train_root),
                ("target_train_labeled_root", &d.target_train_labeled_root),
                ("target_val_root", &d.target_val_root),
                ("out_of_target_train_root", &d.out_of_target_train_root),
                ("out_of_target_val_root", &d.out_of_target_val_root),
            ];
            for (name, path) in optional {
                if let Some(p) = path {
                    let _ = writeln!(out, "data.dir.{name} = {}", p.display());
                }
            }
        }
    }
    out
}

/// FNV-1a of the canonical emitted config, as the code+config fingerprint.
pub fn fingerprint(cfg: &FullConfig) -> String {
    let text = emit(cfg);
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes().chain(env!("CARGO_PKG_VERSION").bytes()) {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    format!("{hash:016x}")
}

/// The manifest is a complete config plus run provenance; it parses back
/// through `load` unchanged.
pub fn write_manifest(
    path: &Path,
    cfg: &FullConfig,
    command: &str,
    out_dir: &Path,
) -> Result<()> {
    let mut doc = String::new();
    let _ = writeln!(doc, "manifest.command = {command}");
    let _ = writeln!(doc, "manifest.version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(doc, "manifest.fingerprint = {}", fingerprint(cfg));
    let _ = writeln!(doc, "manifest.out_dir = {}", out_dir.display());
    doc.push_str(&emit(cfg));
    std::fs::write(path, doc).map_err(io_err(path))?;
    Ok(())
}

/// Convenience for tests and defaults: resolve from a literal document.
pub fn resolve_str(text: &str) -> Result<FullConfig> {
    resolve(&parse_document(text)?, &[])
}

/// Look up a raw value in a parsed document.
pub fn get<'a>(pairs: &'a [(String, String)], key: &str) -> Option<&'a str> {
    pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_from_an_empty_document() {
        let cfg = resolve_str("").unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.encoder, EncoderCfg::toy());
    }

    #[test]
    fn unknown_keys_are_named_in_the_error() {
        let err = resolve_str("train.learning_rate = 3").unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("train.learning_rate"), "{msg}");
    }

    #[test]
    fn overrides_win_over_file_values() {
        let pairs =
            parse_document("train.total_iters = 100\ntrain.warmup_iters = 2").unwrap();
        let overrides = vec![("train.total_iters".to_string(), "7".to_string())];
        let cfg = resolve(&pairs, &overrides).unwrap();
        assert_eq!(cfg.train.total_iters, 7);
    }

    #[test]
    fn emitted_config_roundtrips_exactly() {
        let mut cfg = FullConfig::default();
        cfg.train.total_iters = 1234;
        cfg.train.warmup_iters = 56;
        cfg.train.masking = MaskingMode::Image;
        cfg.encoder.dim = 32;
        let text = emit(&cfg);
        let back = resolve_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn manifest_keys_are_accepted_when_reloading() {
        let cfg = FullConfig::default();
        let mut doc = String::from("manifest.command = train\nmanifest.fingerprint = abc\n");
        doc.push_str(&emit(&cfg));
        let back = resolve_str(&doc).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = resolve_str("# a comment\n\ntrain.seed = 9\n").unwrap();
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn data_kind_can_follow_its_dependent_keys() {
        let text = "data.toy.n_train = 10\ndata.kind = toy\n";
        let cfg = resolve_str(text).unwrap();
        match cfg.data {
            DataConfig::Toy(s) => assert_eq!(s.n_train, 10),
            _ => panic!("expected toy data"),
        }
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = FullConfig::default();
        let mut b = FullConfig::default();
        b.train.seed = 1;
        assert_ne!(fingerprint(&a), fingerprint(&b));
        assert_eq!(fingerprint(&a), fingerprint(&FullConfig::default()));
    }
}
