//! Command-line front end: argument parsing, config resolution and one
//! function per subcommand. Every subcommand writes its resolved config as
//! `<out_dir>/<command>_config.json` next to its CSV/JSON outputs.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_eval, cmd_profile, cmd_summarize, cmd_sweep, cmd_synth, cmd_train, load_dataset, profile_model, single_threaded,
    split_dir, sweep_csv, table_row, EvalOutcome, PredictionSource, ProfileReport, SplitRecord, SummarizeReport,
    SweepCell, TrainReport,
};
pub use config::{Overrides, RunConfig, SweepConfig};

use crate::dataio::{read_dataset, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::DatasetKind;
use crate::train::LossMode;

#[derive(Debug, Parser)]
#[command(name = "framegraph", version, about = "Video summarization with temporal frame graphs")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Clone, Args)]
pub struct GlobalArgs {
    /// Dataset manifest (JSON).
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// JSON config file; any subset of the resolved config fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of random 80/20 splits.
    #[arg(long, global = true)]
    pub splits: Option<usize>,
    /// Temporal window T of the frame graph.
    #[arg(long = "t-window", global = true, allow_hyphen_values = true)]
    pub t_window: Option<i64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub lr: Option<f64>,
    #[arg(long = "loss-mode", global = true, value_parser = parse_loss_mode)]
    pub loss_mode: Option<LossMode>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long = "out-dir", global = true)]
    pub out_dir: Option<PathBuf>,
}

fn parse_loss_mode(s: &str) -> std::result::Result<LossMode, String> {
    match s {
        "binary" => Ok(LossMode::Binary),
        "regression" => Ok(LossMode::Regression),
        _ => Err(format!("expected `binary` or `regression`, got `{s}`")),
    }
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("`{x}`: {e}"));
    match s.split_once('-') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => parse(s).map(|n| (n, n)),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on every split; write checkpoints, histories and a report.
    Train,
    /// Evaluate predictions on each split's validation videos.
    Eval {
        #[arg(long, value_enum, default_value = "model")]
        source: PredictionSource,
        /// Directory of a previous `train` run (defaults to --out-dir).
        #[arg(long = "run-dir")]
        run_dir: Option<PathBuf>,
    },
    /// Summarize one video; write the score curve and selected segments.
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        video: String,
    },
    /// Cross-validated tau over a grid of windows and learning rates.
    Sweep {
        /// Comma-separated windows, e.g. `1,5,10`.
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<i64>>,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',')]
        lrs: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Parameter memory and single-threaded inference time.
    Profile {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Frames of the synthetic video used when no dataset is given.
        #[arg(long, default_value_t = 500)]
        frames: usize,
        #[arg(long, default_value_t = 10)]
        repeats: usize,
    },
    /// Write a synthetic planted-signal dataset.
    Synth {
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 20)]
        videos: usize,
        /// Sampled frames per video, `N` or `MIN-MAX`.
        #[arg(long, default_value = "180-220", value_parser = parse_range)]
        frames: (usize, usize),
        #[arg(long = "feature-dim", default_value_t = 1024)]
        feature_dim: usize,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            dataset: self.dataset.clone(),
            out_dir: self.out_dir.clone(),
            seed: self.seed,
            splits: self.splits,
            window: self.t_window,
            learning_rate: self.lr,
            loss_mode: self.loss_mode,
            epochs: self.epochs,
        }
    }
}

/// Resolves the config; loads the dataset when one is named (its name picks
/// the benchmark defaults).
fn prepare(global: &GlobalArgs) -> Result<(RunConfig, Option<crate::dataio::Dataset>)> {
    let file = global.config.as_deref().map(RunConfig::read_layer).transpose()?;
    let path = global.dataset.clone().or_else(|| {
        file.as_ref()
            .and_then(|v| v.get("dataset"))
            .and_then(|v| v.as_str())
            .map(PathBuf::from)
    });
    let dataset = path.as_deref().map(read_dataset).transpose()?;
    let kind = dataset
        .as_ref()
        .map_or(DatasetKind::Tvsum, |d| DatasetKind::from_name(&d.name));
    let cfg = RunConfig::resolve(kind, file, &global.overrides())?;
    Ok((cfg, dataset))
}

fn require(dataset: Option<crate::dataio::Dataset>) -> Result<crate::dataio::Dataset> {
    dataset.ok_or_else(|| Error::config("dataset", "this subcommand needs --dataset"))
}

pub fn run(cli: Cli) -> Result<()> {
    let (mut cfg, dataset) = prepare(&cli.global)?;
    match cli.command {
        Command::Train => {
            let data = require(dataset)?;
            cfg.persist("train")?;
            let report = single_threaded(|| cmd_train(&cfg, &data))??;
            println!("{}", table_row("framegraph", &report.dataset, &report.summary));
        }
        Command::Eval { source, run_dir } => {
            let data = require(dataset)?;
            cfg.persist("eval")?;
            let run_dir = run_dir.unwrap_or_else(|| cfg.out_dir.clone());
            let out = cmd_eval(&cfg, &data, source, &run_dir)?;
            println!("{}", table_row(source.name(), &out.dataset, &out.summary));
        }
        Command::Summarize { checkpoint, video } => {
            let data = require(dataset)?;
            cfg.persist("summarize")?;
            let r = cmd_summarize(&cfg, &data, &checkpoint, &video)?;
            println!(
                "{video}: {} of {} segments selected, f1 {}",
                r.summary.selected_segments.len(),
                data.get(&video).map_or(0, |v| v.segments.len()),
                r.scores.f1.map_or_else(|| "-".into(), |f| format!("{f:.2}"))
            );
        }
        Command::Sweep { windows, lrs, repeats } => {
            if let Some(w) = windows {
                cfg.sweep.windows = w;
            }
            if let Some(l) = lrs {
                cfg.sweep.learning_rates = l;
            }
            if let Some(r) = repeats {
                cfg.sweep.repeats = r;
            }
            cfg.validate()?;
            let data = require(dataset)?;
            cfg.persist("sweep")?;
            print!("{}", sweep_csv(&cmd_sweep(&cfg, &data)?));
        }
        Command::Profile {
            checkpoint,
            frames,
            repeats,
        } => {
            if frames == 0 {
                return Err(Error::config("frames", "must be >= 1"));
            }
            if repeats == 0 {
                return Err(Error::config("repeats", "must be >= 1"));
            }
            cfg.persist("profile")?;
            let r = cmd_profile(&cfg, dataset.as_ref(), checkpoint.as_deref(), frames, repeats)?;
            println!(
                "parameters {} ({:.2} MB at f32), inference {:.2} ms over {} video(s) of {:.0} frames, peak tape {:.2} MB",
                r.parameters, r.parameter_mb, r.inference_ms_mean, r.videos, r.frames_mean, r.peak_tape_mb
            );
        }
        Command::Synth {
            output,
            videos,
            frames,
            feature_dim,
        } => {
            let synth = SynthConfig {
                feature_dim,
                ..SynthConfig::default()
            };
            let data = cmd_synth(&output, videos, frames, cfg.train.seed, &synth)?;
            println!("wrote {} videos to {}", data.videos.len(), output.display());
        }
    }
    Ok(())
}
