//! Command-line surface: `train`, `eval`, `ablate`, `bench`, and
//! `protocol`, with flat-file configs, `--set` overrides, and one output
//! directory per run holding the manifest, checkpoints, metrics log, and
//! reports.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use adaseg_core::config::RunKind;
use adaseg_core::data::{generate_toy_world, DatasetHandle, DatasetRole, DomainSplits};
use adaseg_core::domain::DomainTag;
use adaseg_core::eval::evaluate;
use adaseg_core::uda::{train, TrainEvent, TrainRun, TrainState};

use crate::bench::{self, BenchMode, BenchTarget, ModelTarget, StubTarget};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config_file::{self, DataConfig, FullConfig};
use crate::dataset_io::load_directory_dataset;
use crate::metrics_log::MetricsLog;
use crate::protocol::{format_protocol_table, protocol_document, run_protocol_parallel};
use crate::report::{format_report, write_report};
use crate::{ablate, AppError, Result};

/// Environment variable consulted when `--device` is not given.
pub const DEVICE_ENV: &str = "ADASEG_DEVICE";

#[derive(Parser, Debug)]
#[command(
    name = "adaseg",
    version,
    about = "Domain-adaptive semantic segmentation: training, evaluation, ablation, and latency benchmarking"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    /// Flat key-value configuration file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set train.total_iters=100.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory for the manifest, checkpoints, logs, and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Compute device; this build supports `cpu`.
    #[arg(long)]
    pub device: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model per the configured run kind.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled dataset.
    Eval(EvalArgs),
    /// Run the six-row component ablation grid.
    Ablate(AblateArgs),
    /// Measure inference latency of a model or calibration stub.
    Bench(BenchArgs),
    /// Run the baseline / self-training / oracle comparison.
    Protocol(ProtocolArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint to score.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory, or `toy:<split>` for a synthetic split
    /// (target_val, out_of_target_val, source).
    #[arg(long)]
    pub dataset: String,
    /// Class count of a directory dataset; defaults to the checkpoint's.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint to benchmark; mutually exclusive with --stub-ms.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use a fixed-cost calibration stub with this many milliseconds per pass.
    #[arg(long)]
    pub stub_ms: Option<f64>,
    /// single_pass or hrda_multipass.
    #[arg(long)]
    pub mode: String,
    /// Input shape HxW, e.g. 64x64.
    #[arg(long)]
    pub shape: String,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    #[arg(long, default_value_t = 100)]
    pub timed: usize,
    /// Also measure this mode and report the speedup ratio.
    #[arg(long)]
    pub against: Option<String>,
    /// Write a comparison bar chart to this PNG path (requires --against).
    #[arg(long)]
    pub chart: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Resolve and validate the device from flag or environment.
pub fn resolve_device(flag: &Option<String>) -> Result<String> {
    let device = flag
        .clone()
        .or_else(|| std::env::var(DEVICE_ENV).ok())
        .unwrap_or_else(|| "cpu".to_string());
    if device != "cpu" {
        return Err(AppError::Device(device));
    }
    Ok(device)
}

fn load_config(common: &CommonArgs) -> Result<FullConfig> {
    let mut overrides = config_file::parse_overrides(&common.set)?;
    if let Some(seed) = common.seed {
        overrides.push(("train.seed".to_string(), seed.to_string()));
    }
    match &common.config {
        Some(path) => config_file::load(path, &overrides),
        None => config_file::resolve(&[], &overrides),
    }
}

fn out_dir(common: &CommonArgs, command: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(command))
}

/// Datasets loaded per the config; entries the data source cannot provide
/// stay empty and are reported when a command needs them.
pub struct LoadedData {
    pub source: Option<DatasetHandle>,
    pub target_train: Option<DatasetHandle>,
    pub target_train_labeled: Option<DatasetHandle>,
    pub target_val: Option<DatasetHandle>,
    pub out_of_target_train: Option<DatasetHandle>,
    pub out_of_target_val: Option<DatasetHandle>,
}

impl LoadedData {
    fn require(&self, which: &str) -> Result<&DatasetHandle> {
        let slot = match which {
            "source" => &self.source,
            "target_train" => &self.target_train,
            "target_train_labeled" => &self.target_train_labeled,
            "target_val" => &self.target_val,
            "out_of_target_train" => &self.out_of_target_train,
            "out_of_target_val" => &self.out_of_target_val,
            _ => unreachable!("unknown split `{which}`"),
        };
        slot.as_ref().ok_or_else(|| {
            AppError::Config(format!("the configured data source provides no `{which}` split"))
        })
    }

    fn into_splits(self) -> Result<DomainSplits> {
        for (name, present) in [
            ("source", self.source.is_some()),
            ("target_train", self.target_train.is_some()),
            ("target_train_labeled", self.target_train_labeled.is_some()),
            ("target_val", self.target_val.is_some()),
            ("out_of_target_train", self.out_of_target_train.is_some()),
            ("out_of_target_val", self.out_of_target_val.is_some()),
        ] {
            if !present {
                return Err(AppError::Config(format!(
                    "the protocol needs every split; `{name}` is missing"
                )));
            }
        }
        Ok(DomainSplits {
            source: self.source.unwrap(),
            target_train: self.target_train.unwrap(),
            target_train_labeled: self.target_train_labeled.unwrap(),
            target_val: self.target_val.unwrap(),
            out_of_target_train: self.out_of_target_train.unwrap(),
            out_of_target_val: self.out_of_target_val.unwrap(),
        })
    }
}

pub fn load_data(cfg: &FullConfig) -> Result<LoadedData> {
    match &cfg.data {
        DataConfig::Toy(spec) => {
            let splits = generate_toy_world(spec)?;
            Ok(LoadedData {
                source: Some(splits.source),
                target_train: Some(splits.target_train),
                target_train_labeled: Some(splits.target_train_labeled),
                target_val: Some(splits.target_val),
                out_of_target_train: Some(splits.out_of_target_train),
                out_of_target_val: Some(splits.out_of_target_val),
            })
        }
        DataConfig::Directory(dir) => {
            let c = dir.classes;
            let load = |root: &Path, role: DatasetRole, labeled: bool, domain: DomainTag| {
                load_directory_dataset(root, role, c, labeled, domain)
            };
            Ok(LoadedData {
                source: Some(load(
                    &dir.source_root,
                    DatasetRole::SourceTrain,
                    true,
                    DomainTag::Source,
                )?),
                target_train: dir
                    .target_train_root
                    .as_ref()
                    .map(|r| load(r, DatasetRole::TargetTrain, false, DomainTag::Target))
                    .transpose()?,
                target_train_labeled: dir
                    .target_train_labeled_root
                    .as_ref()
                    .map(|r| load(r, DatasetRole::TargetTrainLabeled, true, DomainTag::Target))
                    .transpose()?,
                target_val: dir
                    .target_val_root
                    .as_ref()
                    .map(|r| load(r, DatasetRole::TargetVal, true, DomainTag::Target))
                    .transpose()?,
                out_of_target_train: dir
                    .out_of_target_train_root
                    .as_ref()
                    .map(|r| load(r, DatasetRole::OutOfTargetTrain, true, DomainTag::OutOfTarget))
                    .transpose()?,
                out_of_target_val: dir
                    .out_of_target_val_root
                    .as_ref()
                    .map(|r| load(r, DatasetRole::OutOfTargetVal, true, DomainTag::OutOfTarget))
                    .transpose()?,
            })
        }
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    resolve_device(&args.common.device)?;
    let cfg = load_config(&args.common)?;
    let out = out_dir(&args.common, "train");
    std::fs::create_dir_all(&out).map_err(crate::io_err(&out))?;
    config_file::write_manifest(&out.join("manifest"), &cfg, "train", &out)?;

    let data = load_data(&cfg)?;
    let (labeled, unlabeled) = match cfg.train.run_kind {
        RunKind::Baseline => (data.require("source")?, None),
        RunKind::Uda => (data.require("source")?, Some(data.require("target_train")?)),
        RunKind::Oracle => (data.require("target_train_labeled")?, None),
        RunKind::OracleOutOfTarget => (data.require("out_of_target_train")?, None),
    };
    let val = data.target_val.as_ref();

    let mut log = MetricsLog::create(&out.join("metrics.log"))?;
    let ckpt_dir = out.join("checkpoints");
    let mut log_error: Option<AppError> = None;
    let run = TrainRun {
        cfg: &cfg.train,
        enc_cfg: cfg.encoder.clone(),
        labeled,
        unlabeled,
        val,
    };
    let state: TrainState<f32> = train(&run, |event| match event {
        TrainEvent::Step(m) => {
            if log_error.is_none() {
                if let Err(e) = log.append(m) {
                    log_error = Some(e);
                }
            }
        }
        TrainEvent::Checkpoint { step, state } => {
            if log_error.is_none() {
                let path = ckpt_dir.join(format!("step_{step}"));
                if let Err(e) = save_checkpoint(&path, &state.student, &cfg, step) {
                    log_error = Some(e);
                }
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e);
    }
    log.finish()?;

    let final_path = ckpt_dir.join(format!("step_{}", state.step));
    save_checkpoint(&final_path, &state.student, &cfg, state.step)?;
    println!("trained {} steps; checkpoint at {}", state.step, final_path.display());

    if let Some(val) = val {
        let report = evaluate(&state.student, val)?;
        write_report(&out.join("reports/final_eval.txt"), &report)?;
        println!("validation mIoU: {:.4}", report.miou);
    }
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    resolve_device(&args.common.device)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dataset = if let Some(split) = args.dataset.strip_prefix("toy:") {
        // The toy spec travels inside the checkpoint config.
        let data = load_data(&ckpt.config)?;
        match split {
            "source" => data.source,
            "target_train_labeled" => data.target_train_labeled,
            "target_val" => data.target_val,
            "out_of_target_val" => data.out_of_target_val,
            other => {
                return Err(AppError::Config(format!(
                    "unknown toy split `{other}`; use source, target_train_labeled, target_val, or out_of_target_val"
                )))
            }
        }
        .ok_or_else(|| AppError::Config("checkpoint config provides no toy data".into()))?
    } else {
        let classes = args.classes.unwrap_or(ckpt.num_classes);
        load_directory_dataset(
            Path::new(&args.dataset),
            DatasetRole::TargetVal,
            classes,
            true,
            DomainTag::Target,
        )?
    };
    let report = evaluate(&ckpt.model, &dataset)?;
    print!("{}", format_report(&report));
    let out = out_dir(&args.common, "eval");
    write_report(&out.join("reports/eval.txt"), &report)?;
    Ok(())
}

pub fn cmd_ablate(args: &AblateArgs) -> Result<()> {
    resolve_device(&args.common.device)?;
    let cfg = load_config(&args.common)?;
    let out = out_dir(&args.common, "ablate");
    std::fs::create_dir_all(&out).map_err(crate::io_err(&out))?;
    config_file::write_manifest(&out.join("manifest"), &cfg, "ablate", &out)?;

    let splits = load_data(&cfg)?.into_splits()?;
    let rows = ablate::run_ablation(&cfg.train, &cfg.encoder, &splits)?;
    let table = ablate::format_ablation_table(&rows);
    print!("{table}");
    let reports = out.join("reports");
    std::fs::create_dir_all(&reports).map_err(crate::io_err(&reports))?;
    std::fs::write(reports.join("ablation.txt"), &table).map_err(crate::io_err(&reports))?;
    std::fs::write(reports.join("ablation.kv"), ablate::ablation_document(&rows))
        .map_err(crate::io_err(&reports))?;
    Ok(())
}

pub fn cmd_protocol(args: &ProtocolArgs) -> Result<()> {
    resolve_device(&args.common.device)?;
    let cfg = load_config(&args.common)?;
    let out = out_dir(&args.common, "protocol");
    std::fs::create_dir_all(&out).map_err(crate::io_err(&out))?;
    config_file::write_manifest(&out.join("manifest"), &cfg, "protocol", &out)?;

    let splits = load_data(&cfg)?.into_splits()?;
    let result = run_protocol_parallel(&cfg.train, &cfg.encoder, &splits)?;
    let table = format_protocol_table(&result);
    print!("{table}");
    let reports = out.join("reports");
    std::fs::create_dir_all(&reports).map_err(crate::io_err(&reports))?;
    std::fs::write(reports.join("protocol.txt"), &table).map_err(crate::io_err(&reports))?;
    std::fs::write(reports.join("protocol.kv"), protocol_document(&result, &cfg))
        .map_err(crate::io_err(&reports))?;
    Ok(())
}

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let Some((h, w)) = s.split_once('x') else {
        return Err(AppError::Config(format!("--shape expects HxW, got `{s}`")));
    };
    let h = h.trim().parse().map_err(|_| AppError::Config(format!("bad shape `{s}`")))?;
    let w = w.trim().parse().map_err(|_| AppError::Config(format!("bad shape `{s}`")))?;
    Ok((h, w))
}

pub fn cmd_bench(args: &BenchArgs) -> Result<()> {
    resolve_device(&args.common.device)?;
    let mode = BenchMode::parse(&args.mode)?;
    let shape = parse_shape(&args.shape)?;

    let target: Box<dyn BenchTarget> = match (&args.checkpoint, args.stub_ms) {
        (Some(_), Some(_)) => {
            return Err(AppError::Config("--checkpoint and --stub-ms are exclusive".into()))
        }
        (Some(path), None) => Box::new(ModelTarget::new(load_checkpoint(path)?.model)),
        (None, Some(ms)) => Box::new(StubTarget::new(Duration::from_secs_f64(ms / 1e3))),
        (None, None) => {
            // Fresh model per the config; the fusion head is built so both
            // modes are measurable.
            let cfg = load_config(&args.common)?;
            let classes = match &cfg.data {
                DataConfig::Toy(s) => s.class_count,
                DataConfig::Directory(d) => d.classes,
            };
            let model = adaseg_core::model::SegModel::<f32>::new(
                cfg.encoder.clone(),
                classes,
                true,
                cfg.train.seed,
            )?;
            Box::new(ModelTarget::new(model))
        }
    };

    if let Some(against) = &args.against {
        let against = BenchMode::parse(against)?;
        let cmp = bench::compare(
            (target.as_ref(), mode),
            (target.as_ref(), against),
            shape,
            args.warmup,
            args.timed,
        )?;
        print!("{}", bench::format_report(&cmp.faster));
        println!();
        print!("{}", bench::format_report(&cmp.slower));
        println!(
            "speedup of {} over {}: {:.2}x (2-sigma {:.2}..{:.2})",
            mode.as_str(),
            against.as_str(),
            cmp.speedup,
            cmp.speedup_interval.0,
            cmp.speedup_interval.1
        );
        if let Some(chart) = &args.chart {
            bench::write_bar_chart(chart, &cmp)?;
            println!("chart written to {}", chart.display());
        }
    } else {
        let report = bench::measure(target.as_ref(), mode, shape, args.warmup, args.timed)?;
        print!("{}", bench::format_report(&report));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Protocol(args) => cmd_protocol(args),
    }
}
