//! Command-line driver: `stone synth | train | calibrate | eval`.
//!
//! Every command writes under a fixed layout; `train` copies its effective
//! configuration into the run directory so the run can be repeated from it.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stone_core::datasets::{KeyDistribution, SynthSpec};
use stone_core::eval::{describe, FifthRule};
use stone_core::training::Checkpoint;

pub use commands::{Baseline, RunDir, TrainSummary};
pub use config::{DataConfig, DataSource, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "stone", version, about = "Self-supervised musical key estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic labeled corpus (WAV + manifest.csv) and a C major calibration clip.
    Synth(SynthArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Fix a checkpoint's absolute pitch with a C major recording.
    Calibrate(CalibrateArgs),
    /// Score a checkpoint or a baseline on a manifest, or score published counts.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Generator spec (TOML); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_tracks: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Track length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Draw keys independently instead of cycling through all 24.
    #[arg(long)]
    pub uniform_keys: bool,
    /// Split tag written to the manifest.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Continue from a checkpoint written by an earlier run of the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// C major recording; the built-in synthetic clip when absent.
    #[arg(long)]
    pub clip: Option<PathBuf>,
    /// Where to write the calibrated checkpoint (default: in place).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Chroma,
    Template,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FifthArg {
    /// Estimated tonic a fifth above the reference.
    Above,
    /// A fifth in either direction.
    Both,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Trained checkpoint.
    #[arg(long, conflicts_with = "from_counts")]
    pub checkpoint: Option<PathBuf>,
    /// Labeled manifest to score.
    #[arg(long, conflicts_with = "from_counts")]
    pub manifest: Option<PathBuf>,
    /// Restrict the manifest to one split.
    #[arg(long)]
    pub split: Option<String>,
    /// Also (or, without a checkpoint, only) run these baselines.
    #[arg(long, value_enum)]
    pub baseline: Vec<BaselineArg>,
    /// Report directory.
    #[arg(long, default_value = "reports")]
    pub out: PathBuf,
    /// System name used for report files.
    #[arg(long, default_value = "stone")]
    pub name: String,
    #[arg(long, value_enum, default_value = "above")]
    pub fifth: FifthArg,
    /// Score category counts from a TOML table instead of audio.
    #[arg(long)]
    pub from_counts: Option<PathBuf>,
}

fn synth_spec(args: &SynthArgs) -> Result<SynthSpec> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text).map_err(|e| CliError::ConfigParse {
                path: path.clone(),
                message: e.to_string(),
            })?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = args.n_tracks {
        spec.n_tracks = n;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(d) = args.duration {
        spec.duration = d;
    }
    if args.uniform_keys {
        spec.keys = KeyDistribution::Uniform;
    }
    if let Some(split) = &args.split {
        spec.split = split.clone();
    }
    spec.validate()?;
    Ok(spec)
}

/// Apply command-line overrides to a loaded run config.
pub fn train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.run_dir {
        cfg.run_dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        cfg.train.epochs = epochs;
    }
    Ok(cfg)
}

fn eval(args: &EvalArgs) -> Result<()> {
    if let Some(path) = &args.from_counts {
        let scores = commands::eval_from_counts(path)?;
        print!("{}", commands::format_scores(&scores));
        return Ok(());
    }
    let manifest = args
        .manifest
        .as_ref()
        .ok_or_else(|| CliError::Config("eval needs --manifest (or --from-counts)".into()))?;
    if args.checkpoint.is_none() && args.baseline.is_empty() {
        return Err(CliError::Config("eval needs --checkpoint and/or --baseline".into()));
    }
    let rule = match args.fifth {
        FifthArg::Above => FifthRule::Above,
        FifthArg::Both => FifthRule::Both,
    };
    let checkpoint = args.checkpoint.as_ref().map(|p| Checkpoint::load(p)).transpose()?;
    let cqt = checkpoint.as_ref().map(|c| c.cqt.clone()).unwrap_or_default();
    let corpus = commands::load_eval_corpus(manifest, args.split.as_deref(), &cqt)?;
    if let Some(ckpt) = &checkpoint {
        if ckpt.calibration.is_none() {
            eprintln!("warning: checkpoint is not calibrated; predictions are relative");
        }
        let estimator = ckpt.estimator()?;
        let summary = commands::evaluate_model(&estimator, &corpus, &args.name, &args.out, rule)?;
        println!("{}", describe(&summary));
    }
    for b in &args.baseline {
        let baseline = match b {
            BaselineArg::Chroma => Baseline::ChromaArgmax,
            BaselineArg::Template => Baseline::TemplateMatching,
        };
        let summary = commands::evaluate_baseline(baseline, &corpus, cqt.log_gain, &args.out, rule)?;
        println!("{}", describe(&summary));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(args) => {
            let spec = synth_spec(&args)?;
            commands::synth(&spec, &args.out)?;
            Ok(())
        }
        Command::Train(args) => {
            let cfg = train_config(&args)?;
            let summary = commands::train(&cfg, args.resume.as_deref())?;
            if let Some(e) = &summary.eval {
                println!("{}", describe(e));
            }
            Ok(())
        }
        Command::Calibrate(args) => {
            commands::calibrate(&args.checkpoint, args.clip.as_deref(), args.out.as_deref())?;
            Ok(())
        }
        Command::Eval(args) => eval(&args),
    }
}
